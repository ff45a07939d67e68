#include "emos/audio.hpp"

#include "emos/errors.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <string>

namespace emos {

namespace {

std::uint32_t read_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

std::vector<double> hann(Index win) {
  std::vector<double> w(static_cast<std::size_t>(win));
  for (Index n = 0; n < win; ++n) {
    w[static_cast<std::size_t>(n)] =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / static_cast<double>(win));
  }
  return w;
}

}  // namespace

WavData read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  const std::string where = path.string() + ": ";

  if (bytes.size() < 12) throw FormatError(where + "truncated RIFF header");
  if (std::memcmp(bytes.data(), "RIFF", 4) != 0) throw FormatError(where + "bad RIFF magic");
  if (std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) throw FormatError(where + "bad WAVE form type");

  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || body + 16 > bytes.size()) throw FormatError(where + "truncated fmt chunk");
      const std::uint16_t format = read_u16(bytes.data() + body);
      channels = read_u16(bytes.data() + body + 2);
      rate = read_u32(bytes.data() + body + 4);
      bits = read_u16(bytes.data() + body + 14);
      if (format != 1) throw FormatError(where + "audio format " + std::to_string(format) + " is not PCM (1)");
      if (channels != 1) throw FormatError(where + "channel count " + std::to_string(channels) + " is not mono");
      if (bits != 16) throw FormatError(where + "bits per sample " + std::to_string(bits) + " is not 16");
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw FormatError(where + "data chunk before fmt chunk");
      if (body + size > bytes.size()) throw FormatError(where + "truncated data chunk");
      WavData wav;
      wav.sample_rate = static_cast<int>(rate);
      wav.samples.resize(size / 2);
      for (std::size_t i = 0; i < wav.samples.size(); ++i) {
        const auto v = static_cast<std::int16_t>(read_u16(bytes.data() + body + 2 * i));
        wav.samples[i] = static_cast<double>(v) / 32768.0;
      }
      return wav;
    }
    pos = body + size + (size & 1U);
  }
  throw FormatError(where + (have_fmt ? "missing data chunk" : "missing fmt chunk"));
}

void write_wav(const std::filesystem::path& path, std::span<const double> samples, int sample_rate) {
  std::vector<std::uint8_t> out;
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(sample_rate));
  put_u32(out, static_cast<std::uint32_t>(sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_bytes);
  for (double s : samples) {
    const double scaled = std::round(std::clamp(s, -1.0, 1.0) * 32768.0);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0))));
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot write " + path.string());
  file.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {

Vector mel_edges(const MelConfig& config) {
  const double lo = hz_to_mel(config.fmin);
  const double hi = hz_to_mel(config.fmax);
  Vector edges(config.n_mels + 2);
  for (Index i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(config.n_mels + 1));
  }
  return edges;
}

}  // namespace

Vector mel_center_frequencies(const MelConfig& config) { return mel_edges(config).segment(1, config.n_mels); }

RowMatrix mel_filterbank(const MelConfig& config) {
  const Vector edges = mel_edges(config);
  const Index bins = config.n_fft / 2 + 1;
  RowMatrix bank = RowMatrix::Zero(config.n_mels, bins);
  for (Index m = 0; m < config.n_mels; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    for (Index k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * config.sample_rate / static_cast<double>(config.n_fft);
      const double up = (f - left) / (center - left);
      const double down = (right - f) / (right - center);
      bank(m, k) = std::max(0.0, std::min(up, down));
    }
  }
  return bank;
}

MelSpectrogram mel_spectrogram(std::span<const double> samples, const MelConfig& config) {
  if (config.sample_rate != 16000.0) {
    throw ArgumentError("mel_spectrogram: expected 16000 Hz input, got " + std::to_string(config.sample_rate));
  }
  if (config.win > config.n_fft || config.hop < 1) throw ArgumentError("mel_spectrogram: bad window/hop");
  const auto len = static_cast<Index>(samples.size());
  if (len < config.win) {
    throw ArgumentError("mel_spectrogram: signal of " + std::to_string(len) +
                        " samples is shorter than one window of " + std::to_string(config.win));
  }
  const Index frames = 1 + (len - config.win) / config.hop;
  const Index bins = config.n_fft / 2 + 1;
  const RowMatrix bank = mel_filterbank(config);
  const std::vector<double> window = hann(config.win);

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> buffer(static_cast<std::size_t>(config.n_fft));
  std::vector<std::complex<double>> spectrum;
  RowMatrix magnitude(frames, bins);
  for (Index t = 0; t < frames; ++t) {
    std::fill(buffer.begin(), buffer.end(), 0.0);
    for (Index n = 0; n < config.win; ++n) {
      buffer[static_cast<std::size_t>(n)] =
          samples[static_cast<std::size_t>(t * config.hop + n)] * window[static_cast<std::size_t>(n)];
    }
    fft.fwd(spectrum, buffer);
    for (Index k = 0; k < bins; ++k) magnitude(t, k) = std::abs(spectrum[static_cast<std::size_t>(k)]);
  }

  MelSpectrogram mel;
  mel.sample_rate = config.sample_rate;
  mel.hop = config.hop;
  mel.frames = (magnitude * bank.transpose()).array().max(config.floor).log();
  return mel;
}

PitchContour pitch_contour(std::span<const double> samples, double sample_rate, const PitchConfig& config) {
  const auto len = static_cast<Index>(samples.size());
  if (len < config.win) {
    throw ArgumentError("pitch_contour: signal of " + std::to_string(len) +
                        " samples is shorter than one window of " + std::to_string(config.win));
  }
  const Index frames = 1 + (len - config.win) / config.hop;
  const auto min_lag = static_cast<Index>(std::floor(sample_rate / config.max_f0));
  const auto max_lag = std::min<Index>(static_cast<Index>(std::ceil(sample_rate / config.min_f0)), config.win - 2);

  PitchContour contour;
  contour.sample_rate = sample_rate;
  contour.hop = config.hop;
  contour.f0.assign(static_cast<std::size_t>(frames), 0.0);

  Eigen::ArrayXd frame(config.win);
  Eigen::ArrayXd corr = Eigen::ArrayXd::Zero(max_lag + 2);
  for (Index t = 0; t < frames; ++t) {
    for (Index n = 0; n < config.win; ++n) frame[n] = samples[static_cast<std::size_t>(t * config.hop + n)];
    frame -= frame.mean();
    corr.setZero();
    for (Index lag = std::max<Index>(min_lag - 1, 1); lag <= max_lag + 1; ++lag) {
      const Index n = config.win - lag;
      const auto a = frame.head(n);
      const auto b = frame.segment(lag, n);
      const double denom = std::sqrt(a.square().sum() * b.square().sum());
      corr[lag] = denom > 0.0 ? (a * b).sum() / denom : 0.0;
    }
    const double peak = corr.segment(min_lag, max_lag - min_lag + 1).maxCoeff();
    if (!(peak > config.voicing_threshold)) continue;
    Index best = -1;
    for (Index lag = min_lag; lag <= max_lag; ++lag) {
      const bool local_max = corr[lag] >= corr[lag - 1] && corr[lag] >= corr[lag + 1];
      if (local_max && corr[lag] >= 0.9 * peak) {
        best = lag;
        break;
      }
    }
    if (best < 0) continue;
    const double l = corr[best - 1], c = corr[best], r = corr[best + 1];
    const double curvature = l - 2.0 * c + r;
    const double offset = curvature < 0.0 ? 0.5 * (l - r) / curvature : 0.0;
    const double f0 = sample_rate / (static_cast<double>(best) + offset);
    if (f0 >= config.min_f0 && f0 <= config.max_f0) contour.f0[static_cast<std::size_t>(t)] = f0;
  }
  return contour;
}

}  // namespace emos
