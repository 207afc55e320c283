#include "voicectl/signal/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "voicectl/core/errors.hpp"
#include "voicectl/core/fs.hpp"
#include "voicectl/signal/dsp.hpp"

namespace voicectl {

void validate(const Waveform& w) {
  if (w.sample_rate <= 0) throw InvalidInput("sample rate must be positive");
  for (float s : w.samples) {
    if (!std::isfinite(s)) throw InvalidInput("waveform contains non-finite samples");
  }
}

int hop_samples(int sample_rate, double hop_seconds) {
  const int hop = static_cast<int>(std::lround(sample_rate * hop_seconds));
  if (hop <= 0) throw InvalidInput("hop must be at least one sample");
  return hop;
}

namespace {

template <typename V>
V read_le(const unsigned char* p) {
  V v;
  std::memcpy(&v, p, sizeof(V));
  return v;
}

template <typename V>
void put_le(std::vector<unsigned char>& out, V v) {
  unsigned char b[sizeof(V)];
  std::memcpy(b, &v, sizeof(V));
  out.insert(out.end(), b, b + sizeof(V));
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw IoError("not a RIFF/WAVE file: " + path.string());
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::uint32_t data_size = 0;
  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const auto size = read_le<std::uint32_t>(bytes.data() + pos + 4);
    const unsigned char* body = bytes.data() + pos + 8;
    if (pos + 8 + size > bytes.size()) throw IoError("truncated chunk in " + path.string());
    if (std::memcmp(bytes.data() + pos, "fmt ", 4) == 0 && size >= 16) {
      format = read_le<std::uint16_t>(body);
      channels = read_le<std::uint16_t>(body + 2);
      rate = read_le<std::uint32_t>(body + 4);
      bits = read_le<std::uint16_t>(body + 14);
      if (format == 0xFFFE && size >= 26) format = read_le<std::uint16_t>(body + 24);  // extensible
    } else if (std::memcmp(bytes.data() + pos, "data", 4) == 0) {
      data = body;
      data_size = size;
    }
    pos += 8 + size + (size & 1u);
  }
  if (data == nullptr || channels == 0 || rate == 0) throw IoError("missing fmt or data chunk: " + path.string());
  const bool pcm16 = format == 1 && bits == 16;
  const bool f32 = format == 3 && bits == 32;
  if (!pcm16 && !f32) throw IoError("unsupported WAV encoding (need PCM16 or float32): " + path.string());

  const size_t frame_bytes = static_cast<size_t>(bits / 8) * channels;
  const size_t n = data_size / frame_bytes;
  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  w.origin = path.string();
  w.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (size_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + i * frame_bytes + c * (bits / 8);
      acc += pcm16 ? read_le<std::int16_t>(p) / 32768.0 : static_cast<double>(read_le<float>(p));
    }
    w.samples[i] = static_cast<float>(acc / channels);
  }
  return w;
}

Waveform read_wav_at(const std::filesystem::path& path, int target_rate) {
  Waveform w = read_wav(path);
  if (w.sample_rate != target_rate) {
    const double factor = static_cast<double>(target_rate) / w.sample_rate;
    w.samples = dsp::resample(w.samples, factor);
    w.sample_rate = target_rate;
  }
  return w;
}

void write_wav(const std::filesystem::path& path, const Waveform& w, WavFormat format) {
  const bool pcm16 = format == WavFormat::kPcm16;
  const std::uint16_t bits = pcm16 ? 16 : 32;
  const auto data_size = static_cast<std::uint32_t>(w.samples.size() * (bits / 8));
  std::vector<unsigned char> out;
  out.reserve(44 + data_size);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_le<std::uint32_t>(out, 36 + data_size);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_le<std::uint32_t>(out, 16);
  put_le<std::uint16_t>(out, pcm16 ? 1 : 3);
  put_le<std::uint16_t>(out, 1);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.sample_rate));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.sample_rate) * (bits / 8));
  put_le<std::uint16_t>(out, bits / 8);
  put_le<std::uint16_t>(out, bits);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_le<std::uint32_t>(out, data_size);
  for (float s : w.samples) {
    if (pcm16) {
      const double c = std::clamp(static_cast<double>(s), -1.0, 1.0);
      put_le<std::int16_t>(out, static_cast<std::int16_t>(std::lround(c * 32767.0)));
    } else {
      put_le<float>(out, s);
    }
  }
  write_file_atomic(path, std::string(out.begin(), out.end()));
}

}  // namespace voicectl
