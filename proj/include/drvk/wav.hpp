/*
Copyright 2026 The drvk Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS-IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "drvk/common.hpp"
#include "drvk/dsp.hpp"

namespace drvk {

namespace detail {

inline void put_u32(std::string& s, uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u16(std::string& s, uint16_t v) {
  for (int i = 0; i < 2; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline uint32_t get_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
inline uint16_t get_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace detail

// Reads a mono RIFF WAV file, PCM16 (format 1) or IEEE float32 (format 3).
inline Waveform read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open WAV file: " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 44 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw DataError("not a RIFF/WAVE file: " + path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  size_t data_off = 0, data_len = 0;
  size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const uint32_t chunk_len = detail::get_u32(buf.data() + pos + 4);
    const unsigned char* body = buf.data() + pos + 8;
    if (pos + 8 + chunk_len > buf.size()) throw DataError("truncated WAV chunk: " + path);
    if (std::memcmp(buf.data() + pos, "fmt ", 4) == 0) {
      if (chunk_len < 16) throw DataError("malformed fmt chunk: " + path);
      format = detail::get_u16(body);
      channels = detail::get_u16(body + 2);
      rate = detail::get_u32(body + 4);
      bits = detail::get_u16(body + 14);
    } else if (std::memcmp(buf.data() + pos, "data", 4) == 0) {
      data_off = pos + 8;
      data_len = chunk_len;
    }
    pos += 8 + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }
  if (format == 0 || data_off == 0) throw DataError("WAV missing fmt/data chunk: " + path);
  if (channels != 1) throw DataError("only mono WAV is supported: " + path);

  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  if (format == 1 && bits == 16) {
    const size_t n = data_len / 2;
    w.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
      const int16_t v =
          static_cast<int16_t>(detail::get_u16(buf.data() + data_off + 2 * i));
      w.samples[i] = static_cast<double>(v) / 32768.0;
    }
  } else if (format == 3 && bits == 32) {
    const size_t n = data_len / 4;
    w.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
      uint32_t u = detail::get_u32(buf.data() + data_off + 4 * i);
      float v;
      std::memcpy(&v, &u, 4);
      w.samples[i] = static_cast<double>(v);
    }
  } else {
    throw DataError("unsupported WAV encoding (need PCM16 or float32): " + path);
  }
  return w;
}

namespace detail {

inline std::string wav_header(uint16_t format, uint16_t bits, uint32_t rate,
                              uint32_t data_bytes) {
  std::string h;
  h += "RIFF";
  put_u32(h, 36 + data_bytes);
  h += "WAVEfmt ";
  put_u32(h, 16);
  put_u16(h, format);
  put_u16(h, 1);  // mono
  put_u32(h, rate);
  put_u32(h, rate * bits / 8);
  put_u16(h, bits / 8);
  put_u16(h, bits);
  h += "data";
  put_u32(h, data_bytes);
  return h;
}

}  // namespace detail

// Writes mono PCM16 (no dithering). Samples outside [-1, 1] are clipped;
// returns the clip count so callers can warn.
inline size_t write_wav_pcm16(const std::string& path, const Waveform& w) {
  std::string out = detail::wav_header(1, 16, static_cast<uint32_t>(w.sample_rate),
                                       static_cast<uint32_t>(w.size() * 2));
  size_t clipped = 0;
  for (double s : w.samples) {
    double v = s;
    if (v > 1.0) {
      v = 1.0;
      ++clipped;
    } else if (v < -1.0) {
      v = -1.0;
      ++clipped;
    }
    const int32_t q = static_cast<int32_t>(std::lround(v * 32767.0));
    detail::put_u16(out, static_cast<uint16_t>(static_cast<int16_t>(q)));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write WAV file: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("short write to WAV file: " + path);
  return clipped;
}

// Writes mono IEEE float32 (used for impulse responses).
inline void write_wav_float32(const std::string& path, const Waveform& w) {
  std::string out = detail::wav_header(3, 32, static_cast<uint32_t>(w.sample_rate),
                                       static_cast<uint32_t>(w.size() * 4));
  for (double s : w.samples) {
    const float v = static_cast<float>(s);
    uint32_t u;
    std::memcpy(&u, &v, 4);
    detail::put_u32(out, u);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write WAV file: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("short write to WAV file: " + path);
}

}  // namespace drvk
