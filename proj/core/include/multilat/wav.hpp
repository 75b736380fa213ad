#pragma once

#include "multilat/tdoa.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace multilat {

enum class WavFormat { pcm16, float32 };

struct WavData {
  double sample_rate = 16000.0;
  std::vector<std::vector<double>> channels;
};

/// Reads 16-bit PCM or 32-bit IEEE float RIFF/WAVE files (plain or
/// WAVE_FORMAT_EXTENSIBLE). Samples are scaled to [-1, 1) for PCM.
WavData read_wav(const std::filesystem::path& path);

/// PCM output is clipped to [-1, 1].
void write_wav(const std::filesystem::path& path, const WavData& data,
               WavFormat format = WavFormat::float32);

/// One multichannel file, or several mono files in microphone order. All
/// inputs must share one sample rate and length.
MicSignals load_mic_signals(std::span<const std::filesystem::path> paths);

}  // namespace multilat
