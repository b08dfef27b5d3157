#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "incentfed/datagen.hpp"
#include "incentfed/losses.hpp"

namespace incentfed::datagen {

// Dataset container format, for cross-run reuse:
//
//   bytes 0..3    magic "IFDS"
//   bytes 4..7    uint32 version (currently 1), little-endian
//   bytes 8..15   uint64 JSON header length, little-endian
//   then          UTF-8 JSON header: {"spec": {...}, "family", "hidden",
//                 "clients": [{"samples", "cols"}, ...]}
//   then          per client, in order: the payload matrix column-major as
//                 native little-endian doubles, then
//                   quadratic:       the target vector b (doubles)
//                   softmax/mlp2:    the labels (int32)
//
// The payload matrix is A (samples x cols, bias column included) for the
// quadratic family and the raw feature matrix otherwise.

struct DatasetFile {
  DataSpec spec;
  FamilySpec family;
  std::vector<losses::LocalProblem> problems;
};

namespace io_detail {

inline constexpr char kMagic[4] = {'I', 'F', 'D', 'S'};
inline constexpr std::uint32_t kVersion = 1;

inline void write_raw(std::ostream& out, const void* data, std::size_t bytes) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
}

inline void read_raw(std::istream& in, void* data, std::size_t bytes) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(bytes));
  if (!in) throw std::runtime_error("dataset file truncated");
}

inline Family family_from_name(const std::string& name) {
  if (name == "quadratic") return Family::Quadratic;
  if (name == "softmax_linear") return Family::SoftmaxLinear;
  if (name == "mlp2") return Family::Mlp2;
  throw std::runtime_error("dataset file: unknown family '" + name + "'");
}

}  // namespace io_detail

inline void save_datasets(const std::string& path, const DataSpec& spec,
                          const FamilySpec& family,
                          const std::vector<losses::LocalProblem>& problems) {
  namespace d = io_detail;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");

  nlohmann::json header;
  header["spec"] = {{"clients", spec.clients},
                    {"classes", spec.classes},
                    {"feature_dim", spec.feature_dim},
                    {"full_size", std::vector<int>(spec.full_size.data(),
                                                   spec.full_size.data() + spec.full_size.size())},
                    {"dirichlet_alpha", spec.dirichlet_alpha},
                    {"noise_sigma", spec.noise_sigma},
                    {"seed", spec.seed}};
  header["family"] = family_name(family.family);
  header["hidden"] = family.hidden;
  auto& clients = header["clients"] = nlohmann::json::array();
  for (const auto& p : problems) {
    std::visit(
        [&](const auto& f) {
          using F = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<F, losses::Quadratic>)
            clients.push_back({{"samples", f.sample_count()}, {"cols", f.a.cols()}});
          else
            clients.push_back({{"samples", f.sample_count()}, {"cols", f.features.cols()}});
        },
        p.family());
  }

  const std::string header_text = header.dump();
  const std::uint64_t header_len = header_text.size();
  d::write_raw(out, d::kMagic, 4);
  d::write_raw(out, &d::kVersion, sizeof(d::kVersion));
  d::write_raw(out, &header_len, sizeof(header_len));
  d::write_raw(out, header_text.data(), header_text.size());

  for (const auto& p : problems) {
    std::visit(
        [&](const auto& f) {
          using F = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<F, losses::Quadratic>) {
            d::write_raw(out, f.a.data(), sizeof(double) * static_cast<std::size_t>(f.a.size()));
            d::write_raw(out, f.b.data(), sizeof(double) * static_cast<std::size_t>(f.b.size()));
          } else {
            d::write_raw(out, f.features.data(),
                         sizeof(double) * static_cast<std::size_t>(f.features.size()));
            std::vector<std::int32_t> labels(f.labels.begin(), f.labels.end());
            d::write_raw(out, labels.data(), sizeof(std::int32_t) * labels.size());
          }
        },
        p.family());
  }
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

inline DatasetFile load_datasets(const std::string& path) {
  namespace d = io_detail;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");

  char magic[4];
  d::read_raw(in, magic, 4);
  if (std::memcmp(magic, d::kMagic, 4) != 0)
    throw std::runtime_error("'" + path + "' is not a dataset file");
  std::uint32_t version = 0;
  d::read_raw(in, &version, sizeof(version));
  if (version != d::kVersion)
    throw std::runtime_error("dataset file version " + std::to_string(version) +
                             " not supported");
  std::uint64_t header_len = 0;
  d::read_raw(in, &header_len, sizeof(header_len));
  std::string header_text(header_len, '\0');
  d::read_raw(in, header_text.data(), header_len);
  const nlohmann::json header = nlohmann::json::parse(header_text);

  DatasetFile file;
  const auto& s = header.at("spec");
  file.spec.clients = s.at("clients").get<int>();
  file.spec.classes = s.at("classes").get<int>();
  file.spec.feature_dim = s.at("feature_dim").get<int>();
  const auto sizes = s.at("full_size").get<std::vector<int>>();
  file.spec.full_size = Eigen::Map<const Eigen::VectorXi>(sizes.data(),
                                                          static_cast<Eigen::Index>(sizes.size()));
  file.spec.dirichlet_alpha = s.at("dirichlet_alpha").get<double>();
  file.spec.noise_sigma = s.at("noise_sigma").get<double>();
  file.spec.seed = s.at("seed").get<std::uint64_t>();
  file.family.family = d::family_from_name(header.at("family").get<std::string>());
  file.family.hidden = header.at("hidden").get<int>();

  for (const auto& client : header.at("clients")) {
    const int samples = client.at("samples").get<int>();
    const int cols = client.at("cols").get<int>();
    Eigen::MatrixXd matrix(samples, cols);
    d::read_raw(in, matrix.data(), sizeof(double) * static_cast<std::size_t>(matrix.size()));
    if (file.family.family == Family::Quadratic) {
      Eigen::VectorXd b(samples);
      d::read_raw(in, b.data(), sizeof(double) * static_cast<std::size_t>(samples));
      file.problems.emplace_back(losses::Quadratic{std::move(matrix), std::move(b)});
    } else {
      std::vector<std::int32_t> raw(static_cast<std::size_t>(samples));
      d::read_raw(in, raw.data(), sizeof(std::int32_t) * raw.size());
      std::vector<int> labels(raw.begin(), raw.end());
      if (file.family.family == Family::SoftmaxLinear)
        file.problems.emplace_back(losses::SoftmaxLinear{std::move(matrix), std::move(labels),
                                                         file.spec.classes});
      else
        file.problems.emplace_back(losses::Mlp2{std::move(matrix), std::move(labels),
                                                file.family.hidden, file.spec.classes});
    }
  }
  return file;
}

}  // namespace incentfed::datagen
