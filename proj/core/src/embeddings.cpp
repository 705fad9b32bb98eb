// SPDX-License-Identifier: Apache-2.0
#include "gibbsnet/embeddings.hpp"

#include <fstream>

#include "json.hpp"

namespace gibbsnet {

using nlohmann::json;

void EmbeddingTable::add(const thermo::ComponentId& id, const ad::Vector& v) {
  if (v.size() != dimension_) throw DataError("embedding for " + id + " has the wrong dimension");
  if (!v.allFinite()) throw DataError("embedding for " + id + " is not finite");
  if (contains(id)) throw DataError("duplicate component " + id);
  index_.emplace(id, static_cast<int>(ids_.size()));
  ids_.push_back(id);
  vectors_.conservativeResize(vectors_.rows() + 1, dimension_);
  vectors_.row(vectors_.rows() - 1) = v.transpose();
}

int EmbeddingTable::index(const thermo::ComponentId& id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw DataError("unknown component " + id);
  return it->second;
}

ad::Matrix EmbeddingTable::rows(const std::vector<thermo::ComponentId>& ids) const {
  ad::Matrix out(static_cast<Eigen::Index>(ids.size()), dimension_);
  for (std::size_t k = 0; k < ids.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = vectors_.row(index(ids[k]));
  return out;
}

ad::Matrix EmbeddingTable::rows(const std::vector<int>& idx) const {
  ad::Matrix out(static_cast<Eigen::Index>(idx.size()), dimension_);
  for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = vectors_.row(idx[k]);
  return out;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedding file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty embedding file " + path.string());
  try {
    const json header = json::parse(line);
    const int version = header.at("version").get<int>();
    if (version != kEmbeddingFormatVersion) throw DataError("unsupported embedding file version");
    const int D = header.at("dimension").get<int>();
    const auto count = header.at("count").get<std::size_t>();
    if (D <= 0) throw DataError("embedding dimension must be positive");
    EmbeddingTable table(D);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json rec = json::parse(line);
      const auto values = rec.at("vector").get<std::vector<double>>();
      table.add(rec.at("component_id").get<std::string>(),
                Eigen::Map<const ad::Vector>(values.data(), static_cast<Eigen::Index>(values.size())));
    }
    if (table.size() != count) throw DataError("embedding count does not match header");
    return table;
  } catch (const json::exception& e) {
    throw DataError("malformed embedding file " + path.string() + ": " + e.what());
  }
}

void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << json{{"version", kEmbeddingFormatVersion}, {"dimension", table.dimension()}, {"count", table.size()}}.dump()
      << '\n';
  for (std::size_t k = 0; k < table.size(); ++k) {
    const ad::Vector v = table.vectors().row(static_cast<Eigen::Index>(k)).transpose();
    out << json{{"component_id", table.ids()[k]}, {"vector", std::vector<double>(v.data(), v.data() + v.size())}}.dump()
        << '\n';
  }
}

}  // namespace gibbsnet
