#include "multilat/wav.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

namespace multilat {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

void put16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_tag(std::vector<unsigned char>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

}  // namespace

WavData read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open WAV file " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  const auto fail = [&](const std::string& why) {
    return InputError(path.string() + ": " + why);
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw fail("not a RIFF/WAVE file");
  }

  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::uint16_t bits = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::size_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = std::min(size, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) throw fail("truncated fmt chunk");
      format = le16(chunk + 8);
      channels = le16(chunk + 10);
      rate = le32(chunk + 12);
      bits = le16(chunk + 22);
      if (format == kFormatExtensible) {
        if (avail < 26) throw fail("truncated extensible fmt chunk");
        format = le16(chunk + 8 + 24);  // first two bytes of the subformat GUID
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = avail;
    }
    pos = body + size + (size & 1);
  }
  if (!have_fmt) throw fail("missing fmt chunk");
  if (!data) throw fail("missing data chunk");
  if (channels == 0) throw fail("zero channels");
  if (rate == 0) throw fail("zero sample rate");

  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool f32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !f32) {
    throw fail("unsupported sample format (need 16-bit PCM or 32-bit float)");
  }
  const std::size_t width = bits / 8;
  const std::size_t frames = data_size / (width * channels);

  WavData out;
  out.sample_rate = rate;
  out.channels.assign(channels, std::vector<double>(frames));
  for (std::size_t i = 0; i < frames; ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + (i * channels + c) * width;
      double v = 0.0;
      if (pcm16) {
        v = static_cast<std::int16_t>(le16(p)) / 32768.0;
      } else {
        const std::uint32_t raw = le32(p);
        float f = 0.0F;
        std::memcpy(&f, &raw, sizeof f);
        v = f;
      }
      out.channels[c][i] = v;
    }
  }
  return out;
}

void write_wav(const std::filesystem::path& path, const WavData& data, WavFormat format) {
  if (data.channels.empty()) throw InputError("no channels to write");
  const std::size_t frames = data.channels.front().size();
  for (const auto& ch : data.channels) {
    if (ch.size() != frames) throw InputError("channels differ in length");
  }
  const auto channels = static_cast<std::uint16_t>(data.channels.size());
  const std::uint16_t width = format == WavFormat::pcm16 ? 2 : 4;
  const auto rate = static_cast<std::uint32_t>(std::lround(data.sample_rate));
  const auto data_size = static_cast<std::uint32_t>(frames * channels * width);

  std::vector<unsigned char> out;
  out.reserve(44 + data_size);
  put_tag(out, "RIFF");
  put32(out, 36 + data_size);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put32(out, 16);
  put16(out, format == WavFormat::pcm16 ? kFormatPcm : kFormatFloat);
  put16(out, channels);
  put32(out, rate);
  put32(out, rate * channels * width);
  put16(out, static_cast<std::uint16_t>(channels * width));
  put16(out, static_cast<std::uint16_t>(width * 8));
  put_tag(out, "data");
  put32(out, data_size);
  for (std::size_t i = 0; i < frames; ++i) {
    for (const auto& ch : data.channels) {
      if (format == WavFormat::pcm16) {
        const double clipped = std::clamp(ch[i], -1.0, 1.0);
        const auto s = static_cast<std::int16_t>(std::clamp(std::lround(clipped * 32768.0), -32768L, 32767L));
        put16(out, static_cast<std::uint16_t>(s));
      } else {
        const auto f = static_cast<float>(ch[i]);
        std::uint32_t raw = 0;
        std::memcpy(&raw, &f, sizeof raw);
        put32(out, raw);
      }
    }
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw InputError("cannot write WAV file " + path.string());
  file.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

MicSignals load_mic_signals(std::span<const std::filesystem::path> paths) {
  if (paths.empty()) throw InputError("no WAV inputs");
  MicSignals out;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    WavData wav = read_wav(paths[i]);
    if (i == 0) {
      out.sample_rate = wav.sample_rate;
    } else if (wav.sample_rate != out.sample_rate) {
      throw InputError("sample-rate mismatch: " + paths[i].string() + " is at " +
                       std::to_string(wav.sample_rate) + " Hz, expected " +
                       std::to_string(out.sample_rate) + " Hz");
    }
    if (paths.size() > 1 && wav.channels.size() != 1) {
      throw InputError(paths[i].string() + ": expected a mono file when several inputs are given");
    }
    for (auto& ch : wav.channels) out.channels.push_back(std::move(ch));
  }
  out.validate(1);
  return out;
}

}  // namespace multilat
