#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "las/errors.hpp"
#include "las/tensor.hpp"

namespace las {

struct Waveform {
  std::vector<double> samples;  // in [-1, 1]
  int sample_rate = 16000;
};

struct FeatureSequence {
  Tensor frames;  // T x D
  double frame_shift = 0.010;  // seconds
  std::string utterance_id;

  std::int64_t num_frames() const { return frames.numel() ? frames.dim(0) : 0; }
  std::int64_t dim() const { return frames.numel() ? frames.dim(1) : 0; }
};

struct FrontendConfig {
  double window_ms = 25.0;
  double hop_ms = 10.0;
  double preemphasis = 0.97;
  int mel_bins = 40;
  double mel_low_hz = 20.0;   // filter bank spans [mel_low_hz, Nyquist]
  bool cmvn = false;          // per-utterance mean/variance normalization
};

// Raised when the signal is shorter than one analysis window.
class InsufficientSamplesError : public std::runtime_error {
 public:
  explicit InsufficientSamplesError(const std::string& what) : std::runtime_error(what) {}
};

// 16-bit PCM mono WAV. Samples scale by 1/32768 on read.
Waveform read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const Waveform& w);

// Log-mel filter-bank features: pre-emphasis, Hamming window, magnitude
// spectrum, HTK-scale triangular mel bank, natural log floored at ln(1e-10).
// Frame count is 1 + floor((N - window) / hop).
FeatureSequence compute_fbank(const Waveform& w, const FrontendConfig& cfg);

// Speed change by linear-interpolation resampling at positions i*factor.
// Output length round(len/factor); the sample_rate field is unchanged.
Waveform speed_perturb(const Waveform& w, double factor);

void apply_cmvn(FeatureSequence& f);

// "FBNK" feature file: magic, version u32, T u32, D u32, frame_shift f32,
// then T*D f32 little-endian row-major.
void write_features(const std::filesystem::path& path, const FeatureSequence& f);
FeatureSequence read_features(const std::filesystem::path& path);

// Radix-2 FFT helper (also used by test oracles): magnitude spectrum of the
// first nfft points, bins 0..nfft/2.
std::vector<double> magnitude_spectrum(const std::vector<double>& x, std::size_t nfft);

constexpr double kLogFloor = 1e-10;

}  // namespace las
