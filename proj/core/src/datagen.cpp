#include "regopt/datagen.hpp"

#include "regopt/threads.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>
#include <vector>

namespace regopt::datagen {

namespace {

// Stream tags keep signal and noise substreams of one seed independent.
constexpr std::uint64_t kSignalStream = 0x5349474e414c53ull;
constexpr std::uint64_t kNoiseStream = 0x4e4f495345535Dull;

Matrix realize(const Vector& kernel, Index n) {
  const Index len = kernel.size();
  Matrix a = Matrix::Zero(n + len - 1, n);
  for (Index j = 0; j < n; ++j)
    for (Index k = 0; k < len; ++k) a(j + k, j) = kernel(k);
  return a;
}

}  // namespace

ConvolutionOperator::ConvolutionOperator(Vector kernel_in, Index n_in)
    : kernel(std::move(kernel_in)),
      input_dim(n_in),
      realization(realize(kernel, n_in)) {
  if (input_dim < 1) throw DimensionError("ConvolutionOperator: n must be positive");
  if (kernel.size() < 1) throw DimensionError("ConvolutionOperator: empty kernel");
}

Vector hat_kernel(int halfwidth) {
  if (halfwidth < 1) throw Error("hat_kernel: halfwidth must be >= 1");
  const Index h = halfwidth;
  Vector k(2 * h);
  for (Index i = 0; i < h; ++i) {
    k(i) = static_cast<double>(i + 1);
    k(2 * h - 1 - i) = static_cast<double>(i + 1);
  }
  k /= static_cast<double>(h) * static_cast<double>(h + 1);
  double partial = 0;
  for (Index i = 0; i + 1 < 2 * h; ++i) partial += k(i);
  k(2 * h - 1) = 1.0 - partial;
  return k;
}

Vector reverb_kernel(Index n) {
  if (n < 500)
    throw DimensionError("reverb_kernel: n must be >= 500, got " + std::to_string(n));
  Vector v = Vector::Zero(n);
  v(0) = 1.0;
  for (int i = 1; i <= 10; ++i) v(static_cast<Index>(i) * 50 - 1) = std::pow(0.8, i);
  return v;
}

Vector plateau_signal(const std::vector<double>& heights, const std::vector<double>& lo,
                      const std::vector<double>& hi, Index n) {
  Vector x = Vector::Zero(n);
  for (Index j = 0; j < n; ++j) {
    const double t = (static_cast<double>(j) + 0.5) / static_cast<double>(n);
    for (std::size_t i = 0; i < heights.size(); ++i)
      if (t >= lo[i] && t <= hi[i]) x(j) += heights[i];
  }
  return x;
}

Vector gen_plateau_signal(CounterRng& rng, Index n) {
  const auto k = static_cast<std::size_t>(2 + rng.uniform_int(4));
  std::vector<double> heights(k), lo(k), hi(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double a = rng.normal();
    const double b = rng.uniform();
    const double c = rng.uniform(0.0, 0.15);
    heights[i] = a * a + 0.01;
    lo[i] = c - b;
    hi[i] = c + b;
  }
  return plateau_signal(heights, lo, hi, n);
}

SymmetricMatrix linear_decay_noise_cov(Index m, double sigma_first, double sigma_last) {
  if (m < 2) throw DimensionError("linear_decay_noise_cov: m must be >= 2");
  Matrix cov = Matrix::Zero(m, m);
  for (Index i = 0; i < m; ++i) {
    const double sigma = sigma_first + static_cast<double>(i) /
                                           static_cast<double>(m - 1) *
                                           (sigma_last - sigma_first);
    cov(i, i) = sigma * sigma;
  }
  return SymmetricMatrix(cov);
}

Vector normalized_brownian(CounterRng& rng, Index length) {
  if (length < 1) throw DimensionError("normalized_brownian: length must be positive");
  Vector beta(length);
  double acc = 0;
  for (Index t = 0; t < length; ++t) {
    acc += rng.normal();
    beta(t) = acc;
  }
  const double scale = beta.cwiseAbs().maxCoeff();
  if (scale == 0) throw NumericError("normalized_brownian: degenerate all-zero path");
  return beta / scale;
}

Vector lowpass_dft(const Vector& x, double cutoff_hz, double rate_hz) {
  const Index len = x.size();
  Eigen::FFT<double> fft;
  std::vector<double> in(x.data(), x.data() + len);
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, in);
  for (Index k = 0; k < len; ++k) {
    const double bin = static_cast<double>(std::min(k, len - k));
    if (bin * rate_hz / static_cast<double>(len) > cutoff_hz)
      spec[static_cast<std::size_t>(k)] = 0.0;
  }
  std::vector<double> out;
  fft.inv(out, spec);
  return Eigen::Map<const Vector>(out.data(), len);
}

Vector bursty_envelope(CounterRng& rng, Index length, int forced_bursts) {
  if (length < 1) throw DimensionError("bursty_envelope: length must be positive");
  const int bursts =
      forced_bursts >= 0 ? forced_bursts : static_cast<int>(1 + rng.uniform_int(5));
  Vector e = Vector::Constant(length, 0.2);
  for (int b = 0; b < bursts; ++b) {
    const double center = rng.uniform(1.0, static_cast<double>(length));
    const double width = rng.uniform(100.0, 400.0);
    const double amp = rng.uniform(0.5, 1.5);
    for (Index t = 0; t < length; ++t) {
      const double d = (static_cast<double>(t) + 1.0) - center;  // 1-based sample index
      if (std::abs(d) <= width / 2)
        e(t) += amp * 0.5 * (1.0 + std::cos(2.0 * std::numbers::pi * d / width));
    }
  }
  return e;
}

Vector gen_wind_noise(CounterRng& rng, Index length, double cutoff_hz, double rate_hz) {
  if (length < 2) throw DimensionError("gen_wind_noise: length must be >= 2");
  const Vector base = normalized_brownian(rng, length);
  const Vector blp = lowpass_dft(base, cutoff_hz, rate_hz);
  const Vector env = bursty_envelope(rng, length);
  Vector w(length);
  for (Index t = 0; t < length; ++t) {
    const double f = rng.uniform(0.1, 0.5);
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double eps = rng.normal();
    w(t) = blp(t) * env(t) *
               (1.0 + 0.1 * std::sin(2.0 * std::numbers::pi * f *
                                         static_cast<double>(t) / rate_hz +
                                     phi)) +
           eps / 1000.0;
  }
  return w;
}

Vector gen_speech_like(CounterRng& rng, Index n, double rate_hz) {
  if (n < 2) throw DimensionError("gen_speech_like: n must be >= 2");
  const int parts = static_cast<int>(3 + rng.uniform_int(6));
  Vector x = Vector::Zero(n);
  for (int p = 0; p < parts; ++p) {
    const double freq = rng.uniform(80.0, 3500.0);
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double amp = rng.uniform(0.2, 1.0);
    const double onset = rng.uniform(0.0, 0.7 * static_cast<double>(n));
    const double width = rng.uniform(0.25 * static_cast<double>(n),
                                     static_cast<double>(n) - onset);
    for (Index t = 0; t < n; ++t) {
      const double local = static_cast<double>(t) - onset;
      if (local < 0 || local > width) continue;
      const double window =
          0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * local / width));
      x(t) += amp * window *
              std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(t) / rate_hz +
                       phi);
    }
  }
  const double scale = x.cwiseAbs().maxCoeff();
  if (scale > 0) x /= scale;
  return x;
}

std::string noise_model_name(const NoiseModel& model) {
  struct Namer {
    std::string operator()(const DiagonalLinearDecay&) const { return "diag-linear-decay"; }
    std::string operator()(const WindNoise&) const { return "wind"; }
    std::string operator()(const WhiteGaussian&) const { return "white"; }
  };
  return std::visit(Namer{}, model);
}

PairedDataset make_dataset(const Matrix& signals, const ConvolutionOperator& op,
                           const NoiseModel& noise, double eta, std::uint64_t seed,
                           const std::string& generator_id) {
  if (signals.cols() != op.n())
    throw DimensionError("make_dataset: signals have " + std::to_string(signals.cols()) +
                         " columns, operator expects " + std::to_string(op.n()));
  std::visit(
      [](const auto& model) {
        using T = std::decay_t<decltype(model)>;
        if constexpr (std::is_same_v<T, DiagonalLinearDecay>) {
          if (!(model.sigma_first > 0) || !(model.sigma_last > 0))
            throw Error("make_dataset: noise scales must be positive");
        } else if constexpr (std::is_same_v<T, WindNoise>) {
          if (!(model.cutoff_hz > 0) || !(model.rate_hz > 0))
            throw Error("make_dataset: wind-noise frequencies must be positive");
        } else {
          if (!(model.sigma > 0)) throw Error("make_dataset: noise scale must be positive");
        }
      },
      noise);
  const Index count = signals.rows();
  const Index m = op.m();
  Matrix y = signals * op.matrix().mat().transpose();

  const CounterRng base(seed, kNoiseStream);
  std::visit(
      [&](const auto& model) {
        using T = std::decay_t<decltype(model)>;
        if constexpr (std::is_same_v<T, DiagonalLinearDecay>) {
          Vector sigma(m);
          for (Index j = 0; j < m; ++j)
            sigma(j) = model.sigma_first + static_cast<double>(j) /
                                               static_cast<double>(m - 1) *
                                               (model.sigma_last - model.sigma_first);
          parallel_for_chunks(count, 256, [&](Index lo, Index hi) {
            for (Index i = lo; i < hi; ++i) {
              CounterRng rng = base.substream(static_cast<std::uint64_t>(i));
              for (Index j = 0; j < m; ++j) y(i, j) += eta * sigma(j) * rng.normal();
            }
          });
        } else if constexpr (std::is_same_v<T, WindNoise>) {
          parallel_for_chunks(count, 64, [&](Index lo, Index hi) {
            for (Index i = lo; i < hi; ++i) {
              CounterRng rng = base.substream(static_cast<std::uint64_t>(i));
              y.row(i) += eta * gen_wind_noise(rng, m, model.cutoff_hz, model.rate_hz)
                                    .transpose();
            }
          });
        } else {
          static_assert(std::is_same_v<T, WhiteGaussian>);
          parallel_for_chunks(count, 256, [&](Index lo, Index hi) {
            for (Index i = lo; i < hi; ++i) {
              CounterRng rng = base.substream(static_cast<std::uint64_t>(i));
              for (Index j = 0; j < m; ++j) y(i, j) += eta * model.sigma * rng.normal();
            }
          });
        }
      },
      noise);

  DatasetMeta meta;
  meta.seed = seed;
  meta.noise_level = eta;
  meta.generator = generator_id;
  return PairedDataset(signals, std::move(y), std::move(meta));
}

Matrix gen_plateau_signals(Index count, Index n, std::uint64_t seed) {
  Matrix x(count, n);
  const CounterRng base(seed, kSignalStream);
  parallel_for_chunks(count, 256, [&](Index lo, Index hi) {
    for (Index i = lo; i < hi; ++i) {
      CounterRng rng = base.substream(static_cast<std::uint64_t>(i));
      x.row(i) = gen_plateau_signal(rng, n).transpose();
    }
  });
  return x;
}

Matrix gen_speech_like_signals(Index count, Index n, std::uint64_t seed) {
  Matrix x(count, n);
  const CounterRng base(seed, kSignalStream);
  parallel_for_chunks(count, 256, [&](Index lo, Index hi) {
    for (Index i = lo; i < hi; ++i) {
      CounterRng rng = base.substream(static_cast<std::uint64_t>(i));
      x.row(i) = gen_speech_like(rng, n).transpose();
    }
  });
  return x;
}

namespace {

std::uint32_t read_u32(const std::vector<char>& buf, std::size_t at) {
  std::uint32_t v;
  std::memcpy(&v, buf.data() + at, 4);
  return v;
}

std::uint16_t read_u16(const std::vector<char>& buf, std::size_t at) {
  std::uint16_t v;
  std::memcpy(&v, buf.data() + at, 2);
  return v;
}

}  // namespace

Matrix ingest_wav(const std::filesystem::path& path, Index frame_len, Index downsample) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("ingest_wav: cannot open " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(is)),
                        std::istreambuf_iterator<char>());
  auto fail = [&](const std::string& expectation) -> DataError {
    return DataError("ingest_wav: " + path.string() + ": " + expectation);
  };
  if (buf.size() < 44 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw fail("not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t data_at = 0, data_len = 0;
  std::size_t at = 12;
  while (at + 8 <= buf.size()) {
    const std::uint32_t chunk_len = read_u32(buf, at + 4);
    if (std::memcmp(buf.data() + at, "fmt ", 4) == 0) {
      if (chunk_len < 16) throw fail("fmt chunk too short");
      format = read_u16(buf, at + 8);
      channels = read_u16(buf, at + 10);
      rate = read_u32(buf, at + 12);
      bits = read_u16(buf, at + 22);
    } else if (std::memcmp(buf.data() + at, "data", 4) == 0) {
      data_at = at + 8;
      data_len = chunk_len;
    }
    at += 8 + chunk_len + (chunk_len % 2);  // chunks are word aligned
  }
  if (data_at == 0 || data_at + data_len > buf.size()) throw fail("missing data chunk");
  if (channels != 1)
    throw fail("expected mono audio, got " + std::to_string(channels) + " channels");
  if (rate != 16000)
    throw fail("expected a 16000 Hz sample rate, got " + std::to_string(rate));

  Vector samples;
  if (format == 1 && bits == 16) {
    const Index count = static_cast<Index>(data_len / 2);
    samples.resize(count);
    for (Index i = 0; i < count; ++i) {
      std::int16_t v;
      std::memcpy(&v, buf.data() + data_at + 2 * static_cast<std::size_t>(i), 2);
      samples(i) = static_cast<double>(v) / 32768.0;
    }
  } else if (format == 3 && bits == 32) {
    const Index count = static_cast<Index>(data_len / 4);
    samples.resize(count);
    for (Index i = 0; i < count; ++i) {
      float v;
      std::memcpy(&v, buf.data() + data_at + 4 * static_cast<std::size_t>(i), 4);
      samples(i) = static_cast<double>(v);
    }
  } else {
    throw fail("expected 16-bit PCM or 32-bit float samples, got format " +
               std::to_string(format) + " with " + std::to_string(bits) + " bits");
  }

  const double peak = samples.size() > 0 ? samples.cwiseAbs().maxCoeff() : 0.0;
  if (peak == 0) throw fail("silent or empty signal, cannot normalize");
  samples /= peak;

  const Index frames = samples.size() / frame_len;
  if (frames < 1)
    throw fail("signal shorter than one frame (" + std::to_string(samples.size()) +
               " samples)");
  const Index out_len = frame_len / downsample;
  Matrix out(frames, out_len);
  for (Index f = 0; f < frames; ++f)
    for (Index j = 0; j < out_len; ++j) out(f, j) = samples(f * frame_len + j * downsample);
  return out;
}

}  // namespace regopt::datagen
