// Checkpoint layout:
//   8 bytes   magic "UGCLABCK"
//   4 bytes   format version (uint32, little-endian)
//   8 bytes   header length N (uint64, little-endian)
//   N bytes   JSON header: model/vocab config, vocab hash, tensor table
//   ...       tensors in table order, column-major float32, little-endian

#include <bit>
#include <cstring>
#include <fstream>

#include "ugclab/errors.hpp"
#include "ugclab/neuralcopy.hpp"

namespace ugclab {

namespace {

constexpr char kMagic[8] = {'U', 'G', 'C', 'L', 'A', 'B', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename U>
void put_le(std::ostream& out, U v) {
  unsigned char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), sizeof buf);
}

template <typename U>
U get_le(std::istream& in) {
  unsigned char buf[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof buf)) throw DataError("checkpoint truncated");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void CopyModel::save(const std::filesystem::path& path) const {
  nlohmann::json header;
  header["format"] = "ugclab-copy-model";
  header["model_config"] = config_;
  header["vocab"] = vocab_.serialize();
  header["vocab_hash"] = vocab_.fingerprint();
  header["dtype"] = "f32";
  header["byte_order"] = "little";
  nlohmann::json tensors = nlohmann::json::array();
  params_.for_each([&](const char* name, const Eigen::MatrixXf& m) {
    tensors.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  });
  header["tensors"] = tensors;
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  params_.for_each([&](const char*, const Eigen::MatrixXf& m) {
    for (Eigen::Index k = 0; k < m.size(); ++k) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(m.data()[k]));
  });
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

CopyModel CopyModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw DataError("'" + path.string() + "' is not a ugclab checkpoint");
  }
  if (const auto version = get_le<std::uint32_t>(in); version != kVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto len = get_le<std::uint64_t>(in);
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw DataError("checkpoint header truncated");
  const auto header = nlohmann::json::parse(text);
  if (header.at("dtype") != "f32" || header.at("byte_order") != "little") {
    throw DataError("unsupported checkpoint tensor encoding");
  }

  CopyModel model;
  model.config_ = header.at("model_config").get<ModelConfig>();
  model.vocab_ = CharVocab::parse(header.at("vocab").get<std::string>());
  if (model.vocab_.fingerprint() != header.at("vocab_hash").get<std::string>()) {
    throw DataError("checkpoint vocabulary hash mismatch");
  }
  model.params_ = CopyParams<float>::zeros(model.vocab_.id_count(), model.config_.embed_dim, model.config_.hidden_dim);
  const auto& table = header.at("tensors");
  std::size_t k = 0;
  model.params_.for_each([&](const char* name, Eigen::MatrixXf& m) {
    if (k >= table.size() || table[k].at("name") != name || table[k].at("rows") != m.rows() ||
        table[k].at("cols") != m.cols()) {
      throw DataError(std::string("checkpoint tensor table does not match model shape at '") + name + "'");
    }
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = std::bit_cast<float>(get_le<std::uint32_t>(in));
    ++k;
  });
  return model;
}

}  // namespace ugclab
