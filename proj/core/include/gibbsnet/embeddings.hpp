// SPDX-License-Identifier: Apache-2.0
//
// Component embedding table. On disk: JSON lines, a header
// {"version":1,"dimension":D,"count":n} followed by one
// {"component_id":..., "vector":[...]} record per line.
#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "gibbsnet/autodiff.hpp"
#include "gibbsnet/thermo.hpp"

namespace gibbsnet {

inline constexpr int kEmbeddingFormatVersion = 1;

class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(int dimension) : dimension_(dimension), vectors_(0, dimension) {}

  int dimension() const { return dimension_; }
  std::size_t size() const { return ids_.size(); }
  const std::vector<thermo::ComponentId>& ids() const { return ids_; }
  const ad::Matrix& vectors() const { return vectors_; }

  /// Throws DataError on duplicates, wrong length or non-finite entries.
  void add(const thermo::ComponentId& id, const ad::Vector& v);
  bool contains(const thermo::ComponentId& id) const { return index_.count(id) != 0; }
  /// Throws DataError("unknown component ...").
  int index(const thermo::ComponentId& id) const;
  ad::Vector vector(const thermo::ComponentId& id) const { return vectors_.row(index(id)).transpose(); }
  /// Rows for `ids` in the given order.
  ad::Matrix rows(const std::vector<thermo::ComponentId>& ids) const;
  ad::Matrix rows(const std::vector<int>& idx) const;

 private:
  int dimension_ = 0;
  std::vector<thermo::ComponentId> ids_;
  ad::Matrix vectors_;
  std::unordered_map<thermo::ComponentId, int> index_;
};

EmbeddingTable load_embeddings(const std::filesystem::path& path);
void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path);

}  // namespace gibbsnet
