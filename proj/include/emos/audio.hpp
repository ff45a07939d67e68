#pragma once

#include "emos/tensor.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace emos {

struct WavData {
  std::vector<double> samples;  // [-1, 1)
  int sample_rate = 0;
};

/// Reads RIFF/WAVE, PCM format 1, 16-bit, mono. Samples are scaled by 1/32768.
WavData read_wav(const std::filesystem::path& path);

/// Writes 16-bit mono PCM; samples are clipped to [-1, 1).
void write_wav(const std::filesystem::path& path, std::span<const double> samples, int sample_rate);

/// Frames x bands matrix of natural-log mel magnitudes.
struct MelSpectrogram {
  RowMatrix frames;
  double sample_rate = 16000.0;
  Index hop = 200;

  Index num_frames() const { return frames.rows(); }
  Index n_mels() const { return frames.cols(); }
};

struct MelConfig {
  double sample_rate = 16000.0;
  Index win = 800;
  Index hop = 200;
  Index n_fft = 1024;
  Index n_mels = 80;
  double fmin = 40.0;
  double fmax = 7600.0;
  double floor = 1e-5;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Center frequency in Hz of each triangular band.
Vector mel_center_frequencies(const MelConfig& config);

/// [n_mels x (n_fft/2 + 1)] triangular filterbank, unnormalized.
RowMatrix mel_filterbank(const MelConfig& config);

/// Hann-windowed magnitude STFT -> mel filterbank -> log(max(x, floor)).
/// Frame count is 1 + (len - win) / hop. Requires 16 kHz input and at least
/// one full window.
MelSpectrogram mel_spectrogram(std::span<const double> samples, const MelConfig& config = {});

struct PitchContour {
  std::vector<double> f0;  // Hz, 0 where unvoiced
  double sample_rate = 16000.0;
  Index hop = 200;
};

struct PitchConfig {
  Index win = 800;
  Index hop = 200;
  double min_f0 = 50.0;
  double max_f0 = 600.0;
  double voicing_threshold = 0.3;
};

/// Normalized-autocorrelation f0 tracker on the same frame grid as
/// mel_spectrogram.
PitchContour pitch_contour(std::span<const double> samples, double sample_rate,
                           const PitchConfig& config = {});

}  // namespace emos
