#include "las/frontend.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>

namespace las {

namespace {

constexpr double kPi = 3.14159265358979323846;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// In-place iterative radix-2 FFT.
void fft(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const std::complex<double> u = a[i + j];
        const std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

std::uint32_t rd_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t rd_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace

std::vector<double> magnitude_spectrum(const std::vector<double>& x, std::size_t nfft) {
  std::vector<std::complex<double>> buf(nfft, {0.0, 0.0});
  const std::size_t n = std::min(x.size(), nfft);
  for (std::size_t i = 0; i < n; ++i) buf[i] = {x[i], 0.0};
  fft(buf);
  std::vector<double> mag(nfft / 2 + 1);
  for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = std::abs(buf[i]);
  return mag;
}

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("wav: cannot open: " + path.string());
  std::vector<unsigned char> hdr(12);
  if (!is.read(reinterpret_cast<char*>(hdr.data()), 12)) throw FormatError("wav: truncated RIFF header");
  if (std::memcmp(hdr.data(), "RIFF", 4) != 0 || std::memcmp(hdr.data() + 8, "WAVE", 4) != 0) {
    throw FormatError("wav: not a RIFF/WAVE file: " + path.string());
  }

  int sample_rate = 0;
  int channels = 0;
  int bits = 0;
  bool fmt_seen = false;
  Waveform w;
  bool data_seen = false;

  unsigned char chdr[8];
  while (is.read(reinterpret_cast<char*>(chdr), 8)) {
    const std::uint32_t size = rd_u32(chdr + 4);
    if (std::memcmp(chdr, "fmt ", 4) == 0) {
      std::vector<unsigned char> fmt(size);
      if (!is.read(reinterpret_cast<char*>(fmt.data()), size) || size < 16) throw FormatError("wav: truncated fmt chunk");
      const int audio_format = rd_u16(fmt.data());
      channels = rd_u16(fmt.data() + 2);
      sample_rate = static_cast<int>(rd_u32(fmt.data() + 4));
      bits = rd_u16(fmt.data() + 14);
      if (audio_format != 1) throw FormatError("wav: only PCM encoding supported");
      if (channels != 1) throw FormatError("wav: only mono supported");
      if (bits != 16) throw FormatError("wav: only 16-bit samples supported");
      fmt_seen = true;
    } else if (std::memcmp(chdr, "data", 4) == 0) {
      if (!fmt_seen) throw FormatError("wav: data chunk before fmt chunk");
      std::vector<unsigned char> raw(size);
      if (size > 0 && !is.read(reinterpret_cast<char*>(raw.data()), size)) throw FormatError("wav: truncated data chunk");
      const std::size_t n = size / 2;
      w.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::int16_t s = static_cast<std::int16_t>(raw[2 * i] | (raw[2 * i + 1] << 8));
        w.samples[i] = static_cast<double>(s) / 32768.0;
      }
      data_seen = true;
      break;
    } else {
      is.seekg(size + (size & 1), std::ios::cur);  // skip unknown chunk (word aligned)
    }
  }
  if (!fmt_seen || !data_seen) throw FormatError("wav: missing fmt or data chunk: " + path.string());
  w.sample_rate = sample_rate;
  return w;
}

void write_wav(const std::filesystem::path& path, const Waveform& w) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("wav: cannot open for writing: " + path.string());
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  auto wr_u32 = [&](std::uint32_t x) {
    unsigned char b[4] = {static_cast<unsigned char>(x), static_cast<unsigned char>(x >> 8),
                          static_cast<unsigned char>(x >> 16), static_cast<unsigned char>(x >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
  };
  auto wr_u16 = [&](std::uint16_t x) {
    unsigned char b[2] = {static_cast<unsigned char>(x), static_cast<unsigned char>(x >> 8)};
    os.write(reinterpret_cast<const char*>(b), 2);
  };
  os.write("RIFF", 4);
  wr_u32(36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  wr_u32(16);
  wr_u16(1);  // PCM
  wr_u16(1);  // mono
  wr_u32(static_cast<std::uint32_t>(w.sample_rate));
  wr_u32(static_cast<std::uint32_t>(w.sample_rate * 2));
  wr_u16(2);
  wr_u16(16);
  os.write("data", 4);
  wr_u32(data_bytes);
  for (double s : w.samples) {
    double x = std::clamp(s, -1.0, 1.0);
    const std::int16_t q = static_cast<std::int16_t>(std::lrint(std::max(-32768.0, std::min(32767.0, x * 32768.0))));
    wr_u16(static_cast<std::uint16_t>(q));
  }
  if (!os) throw IoError("wav: write failed: " + path.string());
}

FeatureSequence compute_fbank(const Waveform& w, const FrontendConfig& cfg) {
  const std::size_t window = static_cast<std::size_t>(std::lround(cfg.window_ms * 1e-3 * w.sample_rate));
  const std::size_t hop = static_cast<std::size_t>(std::lround(cfg.hop_ms * 1e-3 * w.sample_rate));
  if (window == 0 || hop == 0) throw std::invalid_argument("fbank: window/hop too small for sample rate");
  if (w.samples.size() < window) {
    throw InsufficientSamplesError("fbank: signal shorter than one window (" +
                                   std::to_string(w.samples.size()) + " < " + std::to_string(window) + ")");
  }
  const std::size_t num_frames = 1 + (w.samples.size() - window) / hop;
  const std::size_t nfft = next_pow2(window);
  const std::size_t nbins = nfft / 2 + 1;
  const int d = cfg.mel_bins;

  // Global pre-emphasis; y[0] = x[0] - k*x[0].
  std::vector<double> pre(w.samples.size());
  pre[0] = w.samples[0] - cfg.preemphasis * w.samples[0];
  for (std::size_t i = 1; i < pre.size(); ++i) pre[i] = w.samples[i] - cfg.preemphasis * w.samples[i - 1];

  std::vector<double> window_fn(window);
  for (std::size_t i = 0; i < window; ++i) {
    window_fn[i] = 0.54 - 0.46 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(window - 1));
  }

  // Triangular filters, HTK mel scale, [mel_low_hz, Nyquist].
  const double nyquist = w.sample_rate / 2.0;
  const double mel_lo = hz_to_mel(cfg.mel_low_hz);
  const double mel_hi = hz_to_mel(nyquist);
  std::vector<double> edges(static_cast<std::size_t>(d) + 2);
  for (int m = 0; m < d + 2; ++m) {
    edges[static_cast<std::size_t>(m)] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * m / (d + 1));
  }
  std::vector<std::vector<double>> bank(static_cast<std::size_t>(d), std::vector<double>(nbins, 0.0));
  for (int m = 0; m < d; ++m) {
    const double f0 = edges[static_cast<std::size_t>(m)];
    const double f1 = edges[static_cast<std::size_t>(m) + 1];
    const double f2 = edges[static_cast<std::size_t>(m) + 2];
    for (std::size_t k = 0; k < nbins; ++k) {
      const double fk = static_cast<double>(k) * w.sample_rate / static_cast<double>(nfft);
      double wgt = 0.0;
      if (fk > f0 && fk < f1) wgt = (fk - f0) / (f1 - f0);
      else if (fk >= f1 && fk < f2) wgt = (f2 - fk) / (f2 - f1);
      bank[static_cast<std::size_t>(m)][k] = wgt;
    }
  }

  FeatureSequence out;
  out.frames = Tensor({static_cast<std::int64_t>(num_frames), static_cast<std::int64_t>(d)});
  out.frame_shift = cfg.hop_ms * 1e-3;
  std::vector<double> frame(window);
  for (std::size_t t = 0; t < num_frames; ++t) {
    for (std::size_t i = 0; i < window; ++i) frame[i] = pre[t * hop + i] * window_fn[i];
    const std::vector<double> mag = magnitude_spectrum(frame, nfft);
    for (int m = 0; m < d; ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k < nbins; ++k) e += bank[static_cast<std::size_t>(m)][k] * mag[k];
      out.frames.at(static_cast<std::int64_t>(t), m) = std::log(std::max(e, kLogFloor));
    }
  }
  if (cfg.cmvn) apply_cmvn(out);
  return out;
}

Waveform speed_perturb(const Waveform& w, double factor) {
  if (!(factor > 0.0)) throw std::invalid_argument("speed_perturb: factor must be positive");
  Waveform out;
  out.sample_rate = w.sample_rate;
  if (w.samples.empty()) return out;
  const std::size_t n_out = static_cast<std::size_t>(
      std::llround(static_cast<double>(w.samples.size()) / factor));
  out.samples.resize(n_out);
  const std::size_t last = w.samples.size() - 1;
  for (std::size_t i = 0; i < n_out; ++i) {
    const double pos = static_cast<double>(i) * factor;
    const std::size_t i0 = std::min(static_cast<std::size_t>(pos), last);
    const double frac = pos - static_cast<double>(i0);
    const double a = w.samples[i0];
    const double b = w.samples[std::min(i0 + 1, last)];
    out.samples[i] = a + frac * (b - a);
  }
  return out;
}

void apply_cmvn(FeatureSequence& f) {
  const std::int64_t t = f.num_frames();
  const std::int64_t d = f.dim();
  if (t == 0) return;
  for (std::int64_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (std::int64_t i = 0; i < t; ++i) mean += f.frames.at(i, j);
    mean /= static_cast<double>(t);
    double var = 0.0;
    for (std::int64_t i = 0; i < t; ++i) {
      const double c = f.frames.at(i, j) - mean;
      var += c * c;
    }
    var /= static_cast<double>(t);
    const double inv_std = 1.0 / std::sqrt(std::max(var, 1e-20));
    for (std::int64_t i = 0; i < t; ++i) f.frames.at(i, j) = (f.frames.at(i, j) - mean) * inv_std;
  }
}

void write_features(const std::filesystem::path& path, const FeatureSequence& f) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("features: cannot open for writing: " + path.string());
  auto wr_u32 = [&](std::uint32_t x) {
    unsigned char b[4] = {static_cast<unsigned char>(x), static_cast<unsigned char>(x >> 8),
                          static_cast<unsigned char>(x >> 16), static_cast<unsigned char>(x >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
  };
  os.write("FBNK", 4);
  wr_u32(1);
  wr_u32(static_cast<std::uint32_t>(f.num_frames()));
  wr_u32(static_cast<std::uint32_t>(f.dim()));
  const float shift = static_cast<float>(f.frame_shift);
  os.write(reinterpret_cast<const char*>(&shift), sizeof(float));
  std::vector<float> buf(f.frames.v.begin(), f.frames.v.end());
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!os) throw IoError("features: write failed: " + path.string());
}

FeatureSequence read_features(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("features: cannot open: " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "FBNK", 4) != 0) throw FormatError("features: bad magic: " + path.string());
  unsigned char b[4];
  auto rd = [&]() -> std::uint32_t {
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("features: truncated header");
    return rd_u32(b);
  };
  const std::uint32_t version = rd();
  if (version != 1) throw FormatError("features: unsupported version");
  const std::uint32_t t = rd();
  const std::uint32_t d = rd();
  float shift = 0.0f;
  if (!is.read(reinterpret_cast<char*>(&shift), sizeof(float))) throw FormatError("features: truncated header");
  FeatureSequence f;
  f.frame_shift = static_cast<double>(shift);
  if (t == 0 || d == 0) return f;
  f.frames = Tensor({static_cast<std::int64_t>(t), static_cast<std::int64_t>(d)});
  std::vector<float> buf(static_cast<std::size_t>(t) * d);
  if (!buf.empty() &&
      !is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)))) {
    throw FormatError("features: truncated values");
  }
  for (std::size_t i = 0; i < buf.size(); ++i) f.frames.v[i] = static_cast<double>(buf[i]);
  return f;
}

}  // namespace las
