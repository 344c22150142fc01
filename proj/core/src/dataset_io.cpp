#include "regopt/dataset_io.hpp"

#include <cstring>
#include <fstream>

namespace regopt::io {

namespace {

constexpr char kDatasetMagic[8] = {'R', 'G', 'O', 'P', 'T', 'D', 'S', '1'};
constexpr char kMapMagic[8] = {'R', 'G', 'O', 'P', 'T', 'A', 'M', '1'};
constexpr std::size_t kGeneratorBytes = 24;

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void write_bytes(std::ofstream& os, const void* data, std::size_t bytes) {
  os.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
}

void write_rowmajor(std::ofstream& os, const Matrix& m) {
  const RowMajor tmp = m;
  write_bytes(os, tmp.data(), sizeof(double) * static_cast<std::size_t>(tmp.size()));
}

void read_bytes(std::ifstream& is, void* data, std::size_t bytes, const char* what,
                const std::filesystem::path& path) {
  is.read(static_cast<char*>(data), static_cast<std::streamsize>(bytes));
  if (!is) throw DataError(path.string() + ": truncated while reading " + what);
}

Matrix read_rowmajor(std::ifstream& is, Index rows, Index cols, const char* what,
                     const std::filesystem::path& path) {
  RowMajor tmp(rows, cols);
  read_bytes(is, tmp.data(), sizeof(double) * static_cast<std::size_t>(tmp.size()), what,
             path);
  return Matrix(tmp);
}

// All container writes go through a temp file plus rename.
class AtomicFile {
 public:
  explicit AtomicFile(const std::filesystem::path& path)
      : final_(path), tmp_(path.string() + ".tmp"), os_(tmp_, std::ios::binary | std::ios::trunc) {
    if (!os_) throw DataError("cannot open " + tmp_.string() + " for writing");
  }
  std::ofstream& stream() { return os_; }
  void commit() {
    os_.flush();
    if (!os_) throw DataError("write failed for " + tmp_.string());
    os_.close();
    std::filesystem::rename(tmp_, final_);
  }

 private:
  std::filesystem::path final_, tmp_;
  std::ofstream os_;
};

}  // namespace

void write_dataset(const std::filesystem::path& path, const PairedDataset& dataset) {
  AtomicFile file(path);
  std::ofstream& os = file.stream();
  write_bytes(os, kDatasetMagic, sizeof(kDatasetMagic));
  const std::uint32_t n = static_cast<std::uint32_t>(dataset.n());
  const std::uint32_t m = static_cast<std::uint32_t>(dataset.m());
  const std::uint64_t count = static_cast<std::uint64_t>(dataset.size());
  const std::uint64_t seed = dataset.meta.seed;
  const double eta = dataset.meta.noise_level;
  write_bytes(os, &n, sizeof(n));
  write_bytes(os, &m, sizeof(m));
  write_bytes(os, &count, sizeof(count));
  write_bytes(os, &seed, sizeof(seed));
  write_bytes(os, &eta, sizeof(eta));
  char gen[kGeneratorBytes] = {};
  std::strncpy(gen, dataset.meta.generator.c_str(), kGeneratorBytes - 1);
  write_bytes(os, gen, sizeof(gen));
  write_rowmajor(os, dataset.x);
  write_rowmajor(os, dataset.y);
  file.commit();
}

PairedDataset read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open dataset " + path.string());
  char magic[8];
  read_bytes(is, magic, sizeof(magic), "magic", path);
  if (std::memcmp(magic, kDatasetMagic, sizeof(magic)) != 0)
    throw DataError(path.string() + ": not a dataset container (bad magic)");
  std::uint32_t n, m;
  std::uint64_t count, seed;
  double eta;
  read_bytes(is, &n, sizeof(n), "header", path);
  read_bytes(is, &m, sizeof(m), "header", path);
  read_bytes(is, &count, sizeof(count), "header", path);
  read_bytes(is, &seed, sizeof(seed), "header", path);
  read_bytes(is, &eta, sizeof(eta), "header", path);
  char gen[kGeneratorBytes];
  read_bytes(is, gen, sizeof(gen), "header", path);
  if (n == 0 || m == 0 || count == 0)
    throw DataError(path.string() + ": empty dataset dimensions in header");
  const std::uintmax_t payload =
      static_cast<std::uintmax_t>(count) * (static_cast<std::uintmax_t>(n) + m) * 8;
  constexpr std::uintmax_t kHeaderBytes = 64;
  if (std::filesystem::file_size(path) < kHeaderBytes + payload)
    throw DataError(path.string() + ": header promises more payload than the file holds");
  Matrix x = read_rowmajor(is, static_cast<Index>(count), static_cast<Index>(n), "X", path);
  Matrix y = read_rowmajor(is, static_cast<Index>(count), static_cast<Index>(m), "Y", path);
  DatasetMeta meta;
  meta.seed = seed;
  meta.noise_level = eta;
  meta.generator.assign(gen, strnlen(gen, kGeneratorBytes));
  return PairedDataset(std::move(x), std::move(y), std::move(meta));
}

void write_affine_map(const std::filesystem::path& path, const AffineMap& map) {
  AtomicFile file(path);
  std::ofstream& os = file.stream();
  write_bytes(os, kMapMagic, sizeof(kMapMagic));
  const std::uint64_t n = static_cast<std::uint64_t>(map.n());
  const std::uint64_t m = static_cast<std::uint64_t>(map.m());
  write_bytes(os, &n, sizeof(n));
  write_bytes(os, &m, sizeof(m));
  write_rowmajor(os, map.w);
  write_bytes(os, map.b.data(), sizeof(double) * static_cast<std::size_t>(map.b.size()));
  file.commit();
}

AffineMap read_affine_map(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open map " + path.string());
  char magic[8];
  read_bytes(is, magic, sizeof(magic), "magic", path);
  if (std::memcmp(magic, kMapMagic, sizeof(magic)) != 0)
    throw DataError(path.string() + ": not an affine-map container (bad magic)");
  std::uint64_t n, m;
  read_bytes(is, &n, sizeof(n), "header", path);
  read_bytes(is, &m, sizeof(m), "header", path);
  Matrix w = read_rowmajor(is, static_cast<Index>(n), static_cast<Index>(m), "W", path);
  Vector b(static_cast<Index>(n));
  read_bytes(is, b.data(), sizeof(double) * n, "b", path);
  return AffineMap(std::move(w), std::move(b));
}

}  // namespace regopt::io
