#include "lfp/segmentation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace lfp::segmentation {

namespace {

constexpr double kEps = 1e-9;

// Span of frames [begin, end).
struct FrameSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  double min_conf = 1.0;
};

std::size_t frames_for(double seconds, double rate) {
  return static_cast<std::size_t>(std::ceil(seconds * rate - kEps));
}

bool longer_than(std::size_t frames, double seconds, double rate) {
  return static_cast<double>(frames) > seconds * rate + kEps;
}

double min_prob(const std::vector<double>& probs, std::size_t begin, std::size_t end) {
  return *std::min_element(probs.begin() + static_cast<std::ptrdiff_t>(begin),
                           probs.begin() + static_cast<std::ptrdiff_t>(end));
}

Segment to_segment(const std::string& talk_id, const FrameSpan& span, double rate) {
  return Segment{talk_id, static_cast<double>(span.begin) / rate,
                 static_cast<double>(span.end) / rate, span.min_conf};
}

}  // namespace

void SpeechFrameTrack::validate() const {
  if (probs.empty()) throw std::invalid_argument("speech track " + talk_id + ": empty track");
  if (!(frame_rate_hz > 0.0)) {
    throw std::invalid_argument("speech track " + talk_id + ": frame rate must be positive");
  }
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!(probs[i] >= 0.0 && probs[i] <= 1.0)) {
      throw std::invalid_argument("speech track " + talk_id + ": frame " + std::to_string(i) +
                                  " probability outside [0,1]");
    }
  }
}

namespace {
constexpr std::array<std::string_view, 5> kPolicyNames = {"offline25", "if_asr20", "if_st25",
                                                          "if_qa60", "fixed_window"};
}

std::string_view to_string(Policy policy) {
  return kPolicyNames[static_cast<std::size_t>(policy)];
}

Policy parse_policy(std::string_view name) {
  for (std::size_t i = 0; i < kPolicyNames.size(); ++i) {
    if (kPolicyNames[i] == name) return static_cast<Policy>(i);
  }
  throw std::invalid_argument("unknown chunk policy: " + std::string(name));
}

double default_chunk_size(Policy policy) {
  switch (policy) {
    case Policy::offline25: return 25.0;
    case Policy::if_asr20: return 20.0;
    case Policy::if_st25: return 25.0;
    case Policy::if_qa60: return 60.0;
    case Policy::fixed_window: return 0.0;
  }
  return 0.0;
}

std::size_t to_frame(double seconds, double frame_rate_hz) {
  const double f = std::round(seconds * frame_rate_hz);
  return f <= 0.0 ? 0 : static_cast<std::size_t>(f);
}

std::vector<Segment> frames_to_segments(const SpeechFrameTrack& track,
                                        const HysteresisParams& params) {
  track.validate();
  if (params.on_threshold < params.off_threshold || params.on_threshold < 0.0 ||
      params.on_threshold > 1.0 || params.off_threshold < 0.0 || params.off_threshold > 1.0) {
    throw std::invalid_argument("hysteresis: need 0 <= off_threshold <= on_threshold <= 1");
  }
  const auto& probs = track.probs;
  const double rate = track.frame_rate_hz;

  std::vector<FrameSpan> runs;
  bool active = false;
  std::size_t start = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!active && probs[i] >= params.on_threshold) {
      active = true;
      start = i;
    } else if (active && probs[i] < params.off_threshold) {
      active = false;
      runs.push_back({start, i});
    }
  }
  if (active) runs.push_back({start, probs.size()});

  std::vector<FrameSpan> bridged;
  for (const auto& run : runs) {
    if (!bridged.empty() &&
        static_cast<double>(run.begin - bridged.back().end) < params.min_gap_s * rate - kEps) {
      bridged.back().end = run.end;
    } else {
      bridged.push_back(run);
    }
  }

  std::vector<Segment> out;
  for (auto span : bridged) {
    if (static_cast<double>(span.end - span.begin) < params.min_speech_s * rate - kEps) continue;
    span.min_conf = min_prob(probs, span.begin, span.end);
    out.push_back(to_segment(track.talk_id, span, rate));
  }
  return out;
}

ChunkPlan constrain_segments(const std::vector<Segment>& segments, const SpeechFrameTrack& track,
                             double chunk_size_s, double min_split_part_s, Policy policy) {
  track.validate();
  if (!(min_split_part_s >= 0.0) || !(chunk_size_s > 2.0 * min_split_part_s)) {
    throw std::invalid_argument("constrain_segments: need chunk_size_s > 2 * min_split_part_s");
  }
  const double rate = track.frame_rate_hz;
  const auto& probs = track.probs;

  std::vector<FrameSpan> spans;
  spans.reserve(segments.size());
  for (const auto& seg : segments) {
    if (!(seg.start_s >= 0.0) || !(seg.end_s > seg.start_s)) {
      throw std::invalid_argument("constrain_segments: invalid segment bounds");
    }
    const std::size_t b = to_frame(seg.start_s, rate);
    const std::size_t e = to_frame(seg.end_s, rate);
    if (e > probs.size() || b >= e) {
      throw std::invalid_argument("constrain_segments: segment [" + std::to_string(seg.start_s) +
                                  ", " + std::to_string(seg.end_s) +
                                  "] lies outside the speech track");
    }
    if (!spans.empty() && b < spans.back().end) {
      throw std::invalid_argument("constrain_segments: segments unsorted or overlapping");
    }
    spans.push_back({b, e, seg.min_conf});
  }

  // Split phase.
  const std::size_t min_part = std::max<std::size_t>(1, frames_for(min_split_part_s, rate));
  std::vector<FrameSpan> pieces;
  for (const auto& span : spans) {
    std::vector<FrameSpan> stack{span};
    std::vector<FrameSpan> done;
    while (!stack.empty()) {
      FrameSpan cur = stack.back();
      stack.pop_back();
      if (!longer_than(cur.end - cur.begin, chunk_size_s, rate)) {
        done.push_back(cur);
        continue;
      }
      if (cur.end < cur.begin + 2 * min_part) {
        throw std::invalid_argument("constrain_segments: no admissible split point at frame rate " +
                                    std::to_string(rate));
      }
      const std::size_t lo = cur.begin + min_part;
      const std::size_t hi = cur.end - min_part;  // inclusive
      std::size_t best = lo;
      for (std::size_t i = lo + 1; i <= hi; ++i) {
        if (probs[i] < probs[best]) best = i;
      }
      FrameSpan left{cur.begin, best, min_prob(probs, cur.begin, best)};
      FrameSpan right{best, cur.end, min_prob(probs, best, cur.end)};
      // Right first so the left part is processed next and output stays sorted.
      stack.push_back(right);
      stack.push_back(left);
    }
    pieces.insert(pieces.end(), done.begin(), done.end());
  }

  // Merge phase.
  std::vector<FrameSpan> merged;
  for (const auto& piece : pieces) {
    if (!merged.empty() && !longer_than(piece.end - merged.back().begin, chunk_size_s, rate)) {
      merged.back().end = piece.end;
      merged.back().min_conf = std::min(merged.back().min_conf, piece.min_conf);
    } else {
      merged.push_back(piece);
    }
  }

  ChunkPlan plan;
  plan.talk_id = track.talk_id;
  plan.policy = policy;
  plan.max_chunk_s = chunk_size_s;
  for (const auto& span : merged) plan.chunks.push_back(to_segment(track.talk_id, span, rate));
  return plan;
}

ChunkPlan plan_fixed_windows(double duration_s, double window_s, double overlap_s) {
  if (!(duration_s > 0.0) || !(overlap_s >= 0.0) || !(overlap_s < window_s)) {
    throw std::invalid_argument("plan_fixed_windows: need duration > 0 and 0 <= overlap < window");
  }
  ChunkPlan plan;
  plan.policy = Policy::fixed_window;
  plan.max_chunk_s = window_s;
  const double stride = window_s - overlap_s;
  for (std::size_t k = 0;; ++k) {
    const double start = static_cast<double>(k) * stride;
    const double end = std::min(start + window_s, duration_s);
    plan.chunks.push_back(Segment{{}, start, end, 1.0});
    if (end >= duration_s - kEps) break;
  }
  return plan;
}

ChunkPlan plan_long_audio_chunks(double duration_s, double chunk_s, double cap_s) {
  if (!(duration_s > 0.0) || !(chunk_s > 0.0) || !(cap_s > 0.0)) {
    throw std::invalid_argument("plan_long_audio_chunks: durations must be positive");
  }
  ChunkPlan plan;
  plan.policy = Policy::if_qa60;
  plan.max_chunk_s = chunk_s;
  double limit = duration_s;
  if (duration_s > cap_s) {
    limit = cap_s;
    plan.truncated_at_s = cap_s;
  }
  for (std::size_t k = 0;; ++k) {
    const double start = static_cast<double>(k) * chunk_s;
    if (start >= limit - kEps) break;
    plan.chunks.push_back(Segment{{}, start, std::min(start + chunk_s, limit), 1.0});
  }
  return plan;
}

}  // namespace lfp::segmentation
