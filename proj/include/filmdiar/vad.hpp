// Copyright 2026 The filmdiar Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Energy-based voice activity detection with an adaptive noise floor.
//
// Each frame's log energy is compared against the 20th percentile of all
// frame energies plus a fixed offset. This tolerates the very different
// noise levels of old film soundtracks, assuming at least a fifth of the
// recording is non-speech.

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "filmdiar/core.hpp"
#include "filmdiar/error.hpp"
#include "filmdiar/wav.hpp"

namespace filmdiar {

struct VadConfig {
  double frame_ms = 30.0;
  double hop_ms = 10.0;
  double threshold_db = 12.0;  // above the noise floor
  double min_speech_s = 0.3;
  double min_gap_s = 0.2;
  double floor_percentile = 0.2;

  void validate() const {
    if (!(hop_ms > 0.0) || !(frame_ms >= hop_ms)) {
      throw InvalidArgument("VAD config requires frame_ms >= hop_ms > 0");
    }
    if (min_speech_s < 0.0 || min_gap_s < 0.0) {
      throw InvalidArgument("VAD config requires non-negative min_speech_s and min_gap_s");
    }
    if (floor_percentile < 0.0 || floor_percentile > 1.0) {
      throw InvalidArgument("VAD floor percentile must lie in [0, 1]");
    }
  }
};

inline constexpr int kMinSampleRate = 8000;
inline constexpr double kEnergyEpsilon = 1e-10;

/// Linear interpolation between order statistics at position q * (n - 1).
inline double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidArgument("percentile of empty set");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

struct FrameEnergies {
  std::size_t frame_samples = 0;
  std::size_t hop_samples = 0;
  std::vector<double> log_energy;  // dB, one per frame
};

inline FrameEnergies frame_log_energies(const AudioBuffer &audio,
                                        const VadConfig &cfg) {
  if (audio.sample_rate < kMinSampleRate) {
    throw InvalidArgument("sample rate " + std::to_string(audio.sample_rate) +
                          " Hz is below " + std::to_string(kMinSampleRate));
  }
  if (audio.samples.empty()) throw InvalidArgument("empty audio");
  cfg.validate();

  FrameEnergies fe;
  fe.frame_samples = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(cfg.frame_ms * audio.sample_rate / 1000.0)));
  fe.hop_samples = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(cfg.hop_ms * audio.sample_rate / 1000.0)));

  const std::size_t n = audio.samples.size();
  const std::size_t len = std::min(fe.frame_samples, n);
  for (std::size_t start = 0; start + len <= n; start += fe.hop_samples) {
    double sum = 0.0;
    for (std::size_t i = start; i < start + len; ++i) {
      const double s = audio.samples[i];
      sum += s * s;
    }
    fe.log_energy.push_back(10.0 * std::log10(sum / len + kEnergyEpsilon));
    if (len < fe.frame_samples) break;
  }
  return fe;
}

/// Speech regions of a mono recording.
inline Timeline detect_speech(const AudioBuffer &audio, const VadConfig &cfg,
                              const std::string &recording_id = {}) {
  const FrameEnergies fe = frame_log_energies(audio, cfg);
  const double floor = percentile(fe.log_energy, cfg.floor_percentile);
  const double cut = floor + cfg.threshold_db;

  const double rate = audio.sample_rate;
  const double total = audio.duration();
  const auto frame_interval = [&](std::size_t first, std::size_t last) {
    const double start = static_cast<double>(first * fe.hop_samples) / rate;
    const double end = std::min(
        total, static_cast<double>(last * fe.hop_samples + fe.frame_samples) / rate);
    return TimeInterval(start, end);
  };

  // runs of consecutive speech frames; overlapping runs coalesce in Timeline
  std::vector<TimeInterval> runs;
  const std::size_t frames = fe.log_energy.size();
  for (std::size_t k = 0; k < frames;) {
    if (!(fe.log_energy[k] > cut)) {
      ++k;
      continue;
    }
    std::size_t m = k;
    while (m + 1 < frames && fe.log_energy[m + 1] > cut) ++m;
    runs.push_back(frame_interval(k, m));
    k = m + 1;
  }
  const Timeline raw(recording_id, std::move(runs));

  std::vector<TimeInterval> bridged;
  for (const auto &iv : raw.intervals()) {
    if (!bridged.empty() && iv.start() - bridged.back().end() < cfg.min_gap_s) {
      bridged.back() = TimeInterval(bridged.back().start(), iv.end());
    } else {
      bridged.push_back(iv);
    }
  }

  std::vector<TimeInterval> kept;
  for (const auto &iv : bridged) {
    if (iv.duration() >= cfg.min_speech_s) kept.push_back(iv);
  }
  return Timeline(recording_id, std::move(kept));
}

}  // namespace filmdiar
