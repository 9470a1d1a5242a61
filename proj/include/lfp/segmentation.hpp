#pragma once

// VAD frame tracks to speech segments, and segments to length-constrained
// chunk plans.
//
// Frame i of a track spans [i/rate, (i+1)/rate). Internally every boundary is
// a frame index; seconds are only produced at the edges.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lfp::segmentation {

struct SpeechFrameTrack {
  std::string talk_id;
  double frame_rate_hz = 100.0;
  std::vector<double> probs;

  // Throws std::invalid_argument on empty probs, non-positive rate or a
  // probability outside [0, 1].
  void validate() const;
  double duration_s() const { return static_cast<double>(probs.size()) / frame_rate_hz; }
};

struct Segment {
  std::string talk_id;
  double start_s = 0.0;
  double end_s = 0.0;
  double min_conf = 1.0;

  double duration_s() const { return end_s - start_s; }
  friend bool operator==(const Segment&, const Segment&) = default;
};

enum class Policy { offline25, if_asr20, if_st25, if_qa60, fixed_window };

std::string_view to_string(Policy policy);
Policy parse_policy(std::string_view name);
// 25, 20, 25 and 60 seconds; fixed_window has no intrinsic maximum (0).
double default_chunk_size(Policy policy);

struct ChunkPlan {
  std::string talk_id;
  std::vector<Segment> chunks;
  Policy policy = Policy::offline25;
  std::optional<double> truncated_at_s;
  // Upper bound every chunk respects; the chunk size or window it was
  // planned with.
  double max_chunk_s = 0.0;

  friend bool operator==(const ChunkPlan&, const ChunkPlan&) = default;
};

struct HysteresisParams {
  double on_threshold = 0.6;
  double off_threshold = 0.4;
  double min_speech_s = 0.25;
  double min_gap_s = 0.1;
};

// Hysteresis speech detection. A run opens on the first frame with
// prob >= on_threshold and closes before the first frame with
// prob < off_threshold. Gaps shorter than min_gap_s are bridged first, then
// runs shorter than min_speech_s are dropped.
std::vector<Segment> frames_to_segments(const SpeechFrameTrack& track,
                                        const HysteresisParams& params = {});

// Split segments longer than chunk_size_s at their lowest-probability
// admissible frame (each part >= min_split_part_s, earliest frame on ties),
// then greedily coalesce neighbours left to right while the merged span,
// gaps included, stays within chunk_size_s.
ChunkPlan constrain_segments(const std::vector<Segment>& segments, const SpeechFrameTrack& track,
                             double chunk_size_s, double min_split_part_s = 1.0,
                             Policy policy = Policy::offline25);

// Sliding windows starting at k * (window_s - overlap_s); the last window is
// clipped to duration_s. Windows overlap by construction. Fixed windows have
// no frame track, so min_conf is reported as 1.0.
ChunkPlan plan_fixed_windows(double duration_s, double window_s, double overlap_s);

inline constexpr double kLongAudioChunkS = 60.0;
inline constexpr double kLongAudioCapS = 1602.0;  // 26.7 minutes

// Consecutive chunk_s chunks over min(duration_s, cap_s); sets truncated_at_s
// when the input exceeds the cap.
ChunkPlan plan_long_audio_chunks(double duration_s, double chunk_s = kLongAudioChunkS,
                                 double cap_s = kLongAudioCapS);

// Frame index nearest to a time in seconds.
std::size_t to_frame(double seconds, double frame_rate_hz);

}  // namespace lfp::segmentation
