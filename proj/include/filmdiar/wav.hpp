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

// Minimal RIFF/WAVE reader and writer for mono linear PCM (16-bit integer
// or 32-bit float), the format the audio extraction command produces.

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "filmdiar/error.hpp"

namespace filmdiar {

struct AudioBuffer {
  std::vector<float> samples;  // in [-1, 1]
  int sample_rate = 16000;

  double duration() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate
                           : 0.0;
  }
};

namespace internal {

inline std::uint32_t read_le32(const unsigned char *p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t read_le16(const unsigned char *p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void put_le32(std::string &out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_le16(std::string &out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace internal

inline AudioBuffer decode_wav(const std::vector<unsigned char> &bytes) {
  const auto *p = bytes.data();
  const std::size_t n = bytes.size();
  if (n < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
    throw ParseError("not a RIFF/WAVE file", 0);

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= n) {
    const std::uint32_t size = internal::read_le32(p + pos + 4);
    const std::size_t body = pos + 8;
    if (size > n - body) throw ParseError("truncated WAV chunk", pos);

    if (std::memcmp(p + pos, "fmt ", 4) == 0) {
      if (size < 16) throw ParseError("short fmt chunk", pos);
      format = internal::read_le16(p + body);
      channels = internal::read_le16(p + body + 2);
      rate = internal::read_le32(p + body + 4);
      bits = internal::read_le16(p + body + 14);
      if (format == 0xFFFE && size >= 26) {  // WAVE_FORMAT_EXTENSIBLE
        format = internal::read_le16(p + body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(p + pos, "data", 4) == 0) {
      if (!have_fmt) throw ParseError("data chunk before fmt chunk", pos);
      if (channels != 1) {
        throw ParseError("expected mono audio, got " + std::to_string(channels) +
                             " channels",
                         pos);
      }
      AudioBuffer audio;
      audio.sample_rate = static_cast<int>(rate);
      if (format == 1 && bits == 16) {
        audio.samples.resize(size / 2);
        for (std::size_t i = 0; i < audio.samples.size(); ++i) {
          const auto v = static_cast<std::int16_t>(internal::read_le16(p + body + 2 * i));
          audio.samples[i] = static_cast<float>(v) / 32768.0f;
        }
      } else if (format == 3 && bits == 32) {
        audio.samples.resize(size / 4);
        for (std::size_t i = 0; i < audio.samples.size(); ++i) {
          const std::uint32_t bitsval = internal::read_le32(p + body + 4 * i);
          float f;
          std::memcpy(&f, &bitsval, sizeof(f));
          audio.samples[i] = f;
        }
      } else {
        throw ParseError("unsupported WAV encoding (format " +
                             std::to_string(format) + ", " +
                             std::to_string(bits) + " bits)",
                         pos);
      }
      return audio;
    }
    pos = body + size + (size & 1);
  }
  throw ParseError("no data chunk", pos);
}

inline AudioBuffer read_wav_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open audio file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return decode_wav(bytes);
}

/// Encodes as 16-bit PCM, clipping to [-1, 1].
inline std::string encode_wav_pcm16(const AudioBuffer &audio) {
  std::string out;
  const auto data_size = static_cast<std::uint32_t>(audio.samples.size() * 2);
  out += "RIFF";
  internal::put_le32(out, 36 + data_size);
  out += "WAVEfmt ";
  internal::put_le32(out, 16);
  internal::put_le16(out, 1);
  internal::put_le16(out, 1);
  internal::put_le32(out, static_cast<std::uint32_t>(audio.sample_rate));
  internal::put_le32(out, static_cast<std::uint32_t>(audio.sample_rate) * 2);
  internal::put_le16(out, 2);
  internal::put_le16(out, 16);
  out += "data";
  internal::put_le32(out, data_size);
  for (float s : audio.samples) {
    const float c = s > 1.0f ? 1.0f : (s < -1.0f ? -1.0f : s);
    const auto v = static_cast<std::int16_t>(c >= 1.0f ? 32767 : c * 32768.0f);
    internal::put_le16(out, static_cast<std::uint16_t>(v));
  }
  return out;
}

}  // namespace filmdiar
