#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include <fmt/format.h>

#include "authlm/error.hpp"
#include "authlm/nnlm.hpp"

// Binary container:
//   "AUTHLMNN" | u32 format_version | u32 n | n bytes of config JSON |
//   five tensors, each u64 rows | u64 cols | rows*cols f64, row-major.
// All integers and doubles little-endian.

namespace authlm {
namespace {

constexpr std::array<char, 8> kMagic = {'A', 'U', 'T', 'H', 'L', 'M', 'N', 'N'};
constexpr std::uint32_t kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little, "container assumes little-endian");

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error(ErrorKind::kData, "NNLM file truncated");
  return v;
}

template <typename M>
void write_tensor(std::ostream& out, const M& m) {
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) write_pod<double>(out, m(r, c));
  }
}

template <typename M>
void read_tensor(std::istream& in, M& m, const char* name) {
  const auto rows = read_pod<std::uint64_t>(in);
  const auto cols = read_pod<std::uint64_t>(in);
  if (rows > (1u << 28) || cols > (1u << 28)) {
    throw Error(ErrorKind::kData, fmt::format("NNLM file: implausible shape for {}", name));
  }
  if constexpr (M::ColsAtCompileTime == 1) {
    if (cols != 1) throw Error(ErrorKind::kData, fmt::format("NNLM file: {} is not a vector", name));
    m.resize(static_cast<Eigen::Index>(rows));
  } else {
    m.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  }
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = read_pod<double>(in);
  }
}

}  // namespace

void save_model(const NnlmModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, fmt::format("cannot write '{}'", path.string()));
  out.write(kMagic.data(), kMagic.size());
  write_pod<std::uint32_t>(out, kFormatVersion);
  const std::string cfg = to_json(model.config).dump();
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.size()));
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  write_tensor(out, model.word_emb);
  write_tensor(out, model.emb_hid);
  write_tensor(out, model.hid_bias);
  write_tensor(out, model.hid_out);
  write_tensor(out, model.out_bias);
  if (!out) throw Error(ErrorKind::kIo, fmt::format("write failed for '{}'", path.string()));
}

NnlmModel load_nnlm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, fmt::format("cannot read '{}'", path.string()));
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw Error(ErrorKind::kData, "not an NNLM model file");
  if (read_pod<std::uint32_t>(in) != kFormatVersion) {
    throw Error(ErrorKind::kData, "NNLM file: unsupported format_version");
  }
  const auto len = read_pod<std::uint32_t>(in);
  std::string cfg(len, '\0');
  in.read(cfg.data(), len);
  if (!in) throw Error(ErrorKind::kData, "NNLM file truncated");

  NnlmModel m;
  m.config = nnlm_config_from_json(nlohmann::json::parse(cfg));
  read_tensor(in, m.word_emb, "word_emb");
  read_tensor(in, m.emb_hid, "emb_hid");
  read_tensor(in, m.hid_bias, "hid_bias");
  read_tensor(in, m.hid_out, "hid_out");
  read_tensor(in, m.out_bias, "out_bias");
  m.validate();
  return m;
}

}  // namespace authlm
