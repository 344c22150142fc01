#include "regopt/trainer.hpp"

#include "regopt/linalg.hpp"
#include "regopt/rng.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

namespace regopt::train {

namespace {

constexpr Index kEvalBlock = 1024;
constexpr char kCheckpointMagic[8] = {'R', 'G', 'O', 'P', 'T', 'C', 'P', '1'};

void check_shapes(const TrainableParams& p, const GeneralMatrix& a) {
  const Index n = a.cols(), m = a.rows();
  const bool ok = p.variant == Variant::aff
                      ? (p.mat.rows() == n && p.mat.cols() == m && p.vec.size() == n)
                      : (p.mat.rows() == n && p.mat.cols() == n && p.vec.size() == n);
  if (!ok) {
    std::ostringstream os;
    os << "trainer: " << variant_name(p.variant) << " parameters ("
       << p.mat.rows() << "x" << p.mat.cols() << ", offset " << p.vec.size()
       << ") inconsistent with operator " << m << "x" << n;
    throw DimensionError(os.str());
  }
}

Matrix system_matrix(const TrainableParams& p, const Matrix& ata) {
  switch (p.variant) {
    case Variant::lav:
      return ata + p.mat;
    case Variant::quad:
      return ata + 0.5 * (p.mat + p.mat.transpose());
    case Variant::tikh:
      return ata + p.mat.transpose() * p.mat;
    case Variant::aff:
      break;
  }
  throw Error("system_matrix: affine variant has no system matrix");
}

// Factorizes S, optionally retrying once with a small ridge when the iterate
// is numerically singular. ridge == 0 means throw instead.
Eigen::PartialPivLU<Matrix> factorize_system(const Matrix& s, double ridge,
                                             bool* used_ridge) {
  Eigen::PartialPivLU<Matrix> lu(s);
  if (lu.rcond() > std::numeric_limits<double>::epsilon()) return lu;
  if (ridge > 0) {
    Eigen::PartialPivLU<Matrix> retry(
        Matrix(s + ridge * Matrix::Identity(s.rows(), s.cols())));
    if (retry.rcond() > std::numeric_limits<double>::epsilon()) {
      if (used_ridge) *used_ridge = true;
      return retry;
    }
  }
  std::ostringstream os;
  os << "trainer: singular system matrix at current iterate (reciprocal condition "
        "estimate "
     << lu.rcond() << ")";
  throw NumericError(os.str());
}

struct BatchEval {
  double loss = 0;
  Matrix grad_mat;
  Vector grad_vec;
  bool used_ridge = false;
};

BatchEval eval_batch(const TrainableParams& p, const Matrix& a, const Matrix& ata,
                     const Matrix& x_batch, const Matrix& y_batch, bool per_dim,
                     double ridge) {
  const Index n = p.vec.size();
  const Index batch = y_batch.cols();
  const double den = static_cast<double>(batch) * (per_dim ? static_cast<double>(n) : 1.0);
  BatchEval out;
  if (p.variant == Variant::aff) {
    const Matrix resid =
        p.mat * y_batch + p.vec * Matrix::Constant(1, batch, 1.0) - x_batch;
    out.loss = resid.squaredNorm() / den;
    out.grad_mat = (2.0 / den) * resid * y_batch.transpose();
    out.grad_vec = (2.0 / den) * resid.rowwise().sum();
    return out;
  }
  const Matrix s = system_matrix(p, ata);
  const auto lu = factorize_system(s, ridge, &out.used_ridge);
  const Matrix q =
      a.transpose() * y_batch + p.vec * Matrix::Constant(1, batch, 1.0);
  const Matrix z = lu.solve(q);
  const Matrix resid = z - x_batch;
  out.loss = resid.squaredNorm() / den;
  const Matrix g = lu.transpose().solve(resid);  // S⁻ᵀ r, column per sample
  const Matrix grad_s = (-2.0 / den) * g * z.transpose();
  switch (p.variant) {
    case Variant::lav:
      out.grad_mat = grad_s;
      break;
    case Variant::quad:
      out.grad_mat = 0.5 * (grad_s + grad_s.transpose());
      break;
    case Variant::tikh:
      out.grad_mat = p.mat * (grad_s + grad_s.transpose());
      break;
    case Variant::aff:
      break;
  }
  out.grad_vec = (2.0 / den) * g.rowwise().sum();
  return out;
}

void adam_update(TrainableParams& p, AdamState& st, const Matrix& g_mat,
                 const Vector& g_vec, double lr, const TrainConfig& cfg) {
  st.step += 1;
  const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(st.step));
  st.m_mat = cfg.adam_beta1 * st.m_mat + (1.0 - cfg.adam_beta1) * g_mat;
  st.v_mat = cfg.adam_beta2 * st.v_mat + (1.0 - cfg.adam_beta2) * g_mat.cwiseProduct(g_mat);
  p.mat.array() -=
      lr * (st.m_mat.array() / c1) / ((st.v_mat.array() / c2).sqrt() + cfg.adam_eps);
  st.m_vec = cfg.adam_beta1 * st.m_vec + (1.0 - cfg.adam_beta1) * g_vec;
  st.v_vec = cfg.adam_beta2 * st.v_vec + (1.0 - cfg.adam_beta2) * g_vec.cwiseProduct(g_vec);
  p.vec.array() -=
      lr * (st.m_vec.array() / c1) / ((st.v_vec.array() / c2).sqrt() + cfg.adam_eps);
}

std::vector<Index> shuffled_indices(Index count, std::uint64_t seed, int epoch) {
  std::vector<Index> idx(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) idx[static_cast<std::size_t>(i)] = i;
  CounterRng rng(seed, 0x53485546ull + static_cast<std::uint64_t>(epoch));
  for (Index i = count - 1; i > 0; --i) {
    const auto j = static_cast<Index>(rng.uniform_int(static_cast<std::uint64_t>(i) + 1));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  return idx;
}

void write_bytes(std::ofstream& os, const void* data, std::size_t bytes) {
  os.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
}

void write_matrix_rowmajor(std::ofstream& os, const Matrix& m) {
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const RowMajor tmp = m;
  write_bytes(os, tmp.data(), sizeof(double) * static_cast<std::size_t>(tmp.size()));
}

void read_bytes(std::ifstream& is, void* data, std::size_t bytes, const char* what,
                const std::filesystem::path& path) {
  is.read(static_cast<char*>(data), static_cast<std::streamsize>(bytes));
  if (!is)
    throw DataError("checkpoint " + path.string() + ": truncated while reading " + what);
}

Matrix read_matrix_rowmajor(std::ifstream& is, Index rows, Index cols,
                            const char* what, const std::filesystem::path& path) {
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMajor tmp(rows, cols);
  read_bytes(is, tmp.data(), sizeof(double) * static_cast<std::size_t>(tmp.size()), what,
             path);
  return Matrix(tmp);
}

}  // namespace

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::aff: return "aff";
    case Variant::lav: return "lav";
    case Variant::quad: return "quad";
    case Variant::tikh: return "tikh";
  }
  return "?";
}

Variant variant_from_name(const std::string& name) {
  if (name == "aff") return Variant::aff;
  if (name == "lav") return Variant::lav;
  if (name == "quad") return Variant::quad;
  if (name == "tikh") return Variant::tikh;
  throw ConfigError("unknown trainable variant '" + name + "'");
}

AdamState AdamState::zeros_like(const TrainableParams& p) {
  AdamState st;
  st.m_mat = Matrix::Zero(p.mat.rows(), p.mat.cols());
  st.v_mat = st.m_mat;
  st.m_vec = Vector::Zero(p.vec.size());
  st.v_vec = st.m_vec;
  return st;
}

std::vector<double> LossTrace::smoothed() const {
  const auto w = static_cast<std::size_t>(std::max(smoothing_window, 1));
  std::vector<double> out(step_losses.size());
  double acc = 0;
  for (std::size_t i = 0; i < step_losses.size(); ++i) {
    acc += step_losses[i];
    if (i >= w) acc -= step_losses[i - w];
    out[i] = acc / static_cast<double>(std::min(i + 1, w));
  }
  return out;
}

Matrix forward(const TrainableParams& params, const GeneralMatrix& a,
               const Matrix& y_batch) {
  check_shapes(params, a);
  if (y_batch.rows() != a.rows())
    throw DimensionError("forward: y batch has " + std::to_string(y_batch.rows()) +
                         " rows, operator expects " + std::to_string(a.rows()));
  const Index batch = y_batch.cols();
  if (params.variant == Variant::aff)
    return params.mat * y_batch + params.vec * Matrix::Constant(1, batch, 1.0);
  const Matrix ata = a.mat().transpose() * a.mat();
  const Matrix s = system_matrix(params, ata);
  const auto lu = factorize_system(s, 0.0, nullptr);
  return lu.solve(
      Matrix(a.mat().transpose() * y_batch + params.vec * Matrix::Constant(1, batch, 1.0)));
}

LossGrad loss_and_grad(const TrainableParams& params, const GeneralMatrix& a,
                       const Matrix& x_batch, const Matrix& y_batch,
                       bool per_dimension_loss) {
  check_shapes(params, a);
  if (x_batch.cols() != y_batch.cols() || x_batch.rows() != a.cols() ||
      y_batch.rows() != a.rows())
    throw DimensionError("loss_and_grad: batch dimensions inconsistent with operator");
  const Matrix ata = a.mat().transpose() * a.mat();
  BatchEval ev =
      eval_batch(params, a.mat(), ata, x_batch, y_batch, per_dimension_loss, 0.0);
  return {ev.loss, std::move(ev.grad_mat), std::move(ev.grad_vec)};
}

double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr0) {
  if (total_steps < 1) throw Error("cosine_lr: total_steps must be positive");
  if (step < 0 || step > total_steps)
    throw Error("cosine_lr: step " + std::to_string(step) + " outside [0, " +
                std::to_string(total_steps) + "]");
  return lr0 * 0.5 *
         (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) /
                         static_cast<double>(total_steps)));
}

double dataset_loss(const TrainableParams& params, const GeneralMatrix& a,
                    const PairedDataset& dataset, bool per_dimension_loss) {
  check_shapes(params, a);
  if (dataset.n() != a.cols() || dataset.m() != a.rows())
    throw DimensionError("dataset_loss: dataset inconsistent with operator");
  const Index count = dataset.size();
  const Index n = a.cols();
  double sum = 0;
  if (params.variant == Variant::aff) {
    for (Index r0 = 0; r0 < count; r0 += kEvalBlock) {
      const Index rows = std::min(kEvalBlock, count - r0);
      sum += (dataset.y.middleRows(r0, rows) * params.mat.transpose() +
              Matrix::Constant(rows, 1, 1.0) * params.vec.transpose() -
              dataset.x.middleRows(r0, rows))
                 .squaredNorm();
    }
  } else {
    const Matrix ata = a.mat().transpose() * a.mat();
    const Matrix s = system_matrix(params, ata);
    const auto lu = factorize_system(s, 0.0, nullptr);
    for (Index r0 = 0; r0 < count; r0 += kEvalBlock) {
      const Index rows = std::min(kEvalBlock, count - r0);
      const Matrix q = a.mat().transpose() * dataset.y.middleRows(r0, rows).transpose() +
                       params.vec * Matrix::Constant(1, rows, 1.0);
      sum += (lu.solve(q) - dataset.x.middleRows(r0, rows).transpose()).squaredNorm();
    }
  }
  const double den =
      static_cast<double>(count) * (per_dimension_loss ? static_cast<double>(n) : 1.0);
  return sum / den;
}

AffineMap effective_map(const TrainableParams& params, const GeneralMatrix& a) {
  check_shapes(params, a);
  if (params.variant == Variant::aff) return AffineMap(params.mat, params.vec);
  const Matrix ata = a.mat().transpose() * a.mat();
  const Matrix s = system_matrix(params, ata);
  const auto lu = factorize_system(s, 0.0, nullptr);
  Matrix rhs(s.rows(), a.rows() + 1);
  rhs.leftCols(a.rows()) = a.mat().transpose();
  rhs.col(a.rows()) = params.vec;
  const Matrix sol = lu.solve(rhs);
  return AffineMap(sol.leftCols(a.rows()), sol.col(a.rows()));
}

TrainResult train(const PairedDataset& dataset, const GeneralMatrix& a,
                  const TrainConfig& config, TrainableParams init) {
  check_shapes(init, a);
  if (config.epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (config.batch_size < 1 || config.batch_size > dataset.size())
    throw ConfigError("train: batch_size must be in [1, dataset size]");
  if (!(config.initial_lr > 0)) throw ConfigError("train: initial_lr must be positive");
  if (dataset.n() != a.cols() || dataset.m() != a.rows())
    throw DimensionError("train: dataset inconsistent with operator");

  const Index count = dataset.size();
  const Index n = a.cols(), m = a.rows();
  const Index batch = config.batch_size;
  const std::int64_t steps_per_epoch = (count + batch - 1) / batch;
  const std::int64_t total_steps = static_cast<std::int64_t>(config.epochs) * steps_per_epoch;

  const Matrix& A = a.mat();
  const Matrix ata = A.transpose() * A;
  const double ridge = 1e-12 * ata.trace() / static_cast<double>(n);

  TrainResult result;
  result.params = std::move(init);
  result.state = AdamState::zeros_like(result.params);
  result.trace.smoothing_window =
      static_cast<int>(std::max<std::int64_t>(1, std::llround(0.05 * static_cast<double>(total_steps))));
  result.trace.step_losses.reserve(static_cast<std::size_t>(total_steps));

  const double initial_loss =
      dataset_loss(result.params, a, dataset, config.per_dimension_loss);
  result.trace.epoch_losses.push_back(initial_loss);
  const double divergence_threshold =
      config.divergence_factor * std::max(initial_loss, 1e-12);

  Matrix x_batch(n, batch), y_batch(m, batch);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const std::vector<Index> order = shuffled_indices(count, config.seed, epoch);
    for (std::int64_t k = 0; k < steps_per_epoch; ++k) {
      const Index lo = static_cast<Index>(k) * batch;
      const Index rows = std::min<Index>(batch, count - lo);
      x_batch.resize(n, rows);
      y_batch.resize(m, rows);
      for (Index i = 0; i < rows; ++i) {
        const Index src = order[static_cast<std::size_t>(lo + i)];
        x_batch.col(i) = dataset.x.row(src).transpose();
        y_batch.col(i) = dataset.y.row(src).transpose();
      }
      const double lr = cosine_lr(result.state.step, total_steps, config.initial_lr);
      BatchEval ev;
      try {
        ev = eval_batch(result.params, A, ata, x_batch, y_batch,
                        config.per_dimension_loss, ridge);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " (step " +
                           std::to_string(result.state.step) + ")");
      }
      if (ev.used_ridge) result.trace.ridge_events.push_back(result.state.step);
      adam_update(result.params, result.state, ev.grad_mat, ev.grad_vec, lr, config);
      result.trace.step_losses.push_back(ev.loss);
      if (!std::isfinite(ev.loss) || ev.loss > divergence_threshold) {
        result.diverged = true;
        result.diverged_step = result.state.step - 1;
        result.trace.epoch_losses.push_back(
            dataset_loss(result.params, a, dataset, config.per_dimension_loss));
        return result;
      }
    }
    result.trace.epoch_losses.push_back(
        dataset_loss(result.params, a, dataset, config.per_dimension_loss));
  }
  return result;
}

Matrix initial_tikhonov_factor(const GeneralMatrix& a) {
  const Index n = a.cols();
  const Matrix ata = a.mat().transpose() * a.mat();
  const double alpha =
      std::sqrt(0.1 * ata.norm() / std::sqrt(static_cast<double>(n)));
  return alpha * Matrix::Identity(n, n);
}

ChainResult warm_start_chain(const PairedDataset& dataset, const GeneralMatrix& a,
                             const TrainConfig& config, const Matrix* tikh_init) {
  const Index n = a.cols();
  ChainResult out;

  TrainableParams tikh0{Variant::tikh,
                        tikh_init != nullptr ? *tikh_init : initial_tikhonov_factor(a),
                        Vector::Zero(n)};
  out.tikh = train(dataset, a, config, std::move(tikh0));

  TrainableParams quad0{Variant::quad,
                        out.tikh.params.mat.transpose() * out.tikh.params.mat,
                        out.tikh.params.vec};
  out.quad = train(dataset, a, config, std::move(quad0));

  TrainableParams lav0{Variant::lav, out.quad.params.mat, out.quad.params.vec};
  out.lav = train(dataset, a, config, std::move(lav0));

  const Matrix s = a.mat().transpose() * a.mat() + out.lav.params.mat;
  const Matrix w0 = solve_general(s, Matrix(a.mat().transpose()));
  const Vector b0 = solve_general(s, out.lav.params.vec);
  TrainableParams aff0{Variant::aff, w0, b0};
  out.aff = train(dataset, a, config, std::move(aff0));
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("checkpoint: cannot open " + tmp.string() + " for writing");
    write_bytes(os, kCheckpointMagic, sizeof(kCheckpointMagic));
    const std::uint32_t variant = static_cast<std::uint32_t>(ck.params.variant);
    const std::uint64_t rows = static_cast<std::uint64_t>(ck.params.mat.rows());
    const std::uint64_t cols = static_cast<std::uint64_t>(ck.params.mat.cols());
    const std::uint64_t vec = static_cast<std::uint64_t>(ck.params.vec.size());
    const std::uint64_t step = static_cast<std::uint64_t>(ck.state.step);
    write_bytes(os, &variant, sizeof(variant));
    write_bytes(os, &rows, sizeof(rows));
    write_bytes(os, &cols, sizeof(cols));
    write_bytes(os, &vec, sizeof(vec));
    write_bytes(os, &step, sizeof(step));
    write_matrix_rowmajor(os, ck.params.mat);
    write_bytes(os, ck.params.vec.data(), sizeof(double) * static_cast<std::size_t>(vec));
    write_matrix_rowmajor(os, ck.state.m_mat);
    write_matrix_rowmajor(os, ck.state.v_mat);
    write_bytes(os, ck.state.m_vec.data(), sizeof(double) * static_cast<std::size_t>(vec));
    write_bytes(os, ck.state.v_vec.data(), sizeof(double) * static_cast<std::size_t>(vec));
    if (!os) throw DataError("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint: cannot open " + path.string());
  char magic[8];
  read_bytes(is, magic, sizeof(magic), "magic", path);
  if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw DataError("checkpoint " + path.string() + ": bad magic");
  std::uint32_t variant;
  std::uint64_t rows, cols, vec, step;
  read_bytes(is, &variant, sizeof(variant), "variant", path);
  read_bytes(is, &rows, sizeof(rows), "shape", path);
  read_bytes(is, &cols, sizeof(cols), "shape", path);
  read_bytes(is, &vec, sizeof(vec), "shape", path);
  read_bytes(is, &step, sizeof(step), "step", path);
  if (variant > 3) throw DataError("checkpoint " + path.string() + ": bad variant tag");
  Checkpoint ck;
  ck.params.variant = static_cast<Variant>(variant);
  ck.params.mat = read_matrix_rowmajor(is, static_cast<Index>(rows),
                                       static_cast<Index>(cols), "parameters", path);
  ck.params.vec.resize(static_cast<Index>(vec));
  read_bytes(is, ck.params.vec.data(), sizeof(double) * vec, "offset", path);
  ck.state.m_mat = read_matrix_rowmajor(is, static_cast<Index>(rows),
                                        static_cast<Index>(cols), "adam m", path);
  ck.state.v_mat = read_matrix_rowmajor(is, static_cast<Index>(rows),
                                        static_cast<Index>(cols), "adam v", path);
  ck.state.m_vec.resize(static_cast<Index>(vec));
  read_bytes(is, ck.state.m_vec.data(), sizeof(double) * vec, "adam m offset", path);
  ck.state.v_vec.resize(static_cast<Index>(vec));
  read_bytes(is, ck.state.v_vec.data(), sizeof(double) * vec, "adam v offset", path);
  ck.state.step = static_cast<std::int64_t>(step);
  return ck;
}

}  // namespace regopt::train
