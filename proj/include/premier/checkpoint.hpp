// SPDX-License-Identifier: Apache-2.0
//
// Named-tensor container file and model save / load on top of it.
//
// File layout (little-endian):
//   "PRMRCKPT" | u32 version | u32 entry count | entries
//   entry: u8 kind | u32 name length | name | payload
//     kind 0 (tensor): u32 rank | u64 dims[rank] | f64 values, column-major
//     kind 1 (text):   u64 length | bytes
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "premier/ehr.hpp"
#include "premier/model.hpp"

namespace premier {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class Checkpoint {
 public:
  void put_tensor(const std::string& name, MatrixX value);
  void put_text(const std::string& name, std::string value);

  bool has_tensor(const std::string& name) const { return tensors_.count(name) != 0; }
  bool has_text(const std::string& name) const { return texts_.count(name) != 0; }
  /// Throws IoError when absent.
  const MatrixX& tensor(const std::string& name) const;
  const std::string& text(const std::string& name) const;

  const std::map<std::string, MatrixX>& tensors() const { return tensors_; }
  const std::map<std::string, std::string>& texts() const { return texts_; }

 private:
  std::map<std::string, MatrixX> tensors_;
  std::map<std::string, std::string> texts_;
};

void write_checkpoint(const Checkpoint& checkpoint, std::ostream& out);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// FNV-1a, 64 bit.
std::uint64_t fnv1a64(std::string_view bytes);
/// 16 hex digits of fnv1a64 over the file contents.
std::string file_hash(const std::filesystem::path& path);

struct ModelMetadata {
  Vocabularies vocabularies;
  std::vector<std::string> train_ids;
  std::vector<std::string> validation_ids;
  std::vector<std::string> test_ids;
  std::uint64_t seed = 0;
  std::size_t best_epoch = 0;
  double best_val_jaccard = 0.0;
};

/// Parameters, graphs, Z_C / Z_D, configuration, and metadata.
Checkpoint model_checkpoint(const PremierModel& model, const ModelMetadata& metadata);

struct LoadedModel {
  PremierModel model;
  ModelMetadata metadata;
  std::string hash;  // empty unless loaded from a file
};

LoadedModel model_from_checkpoint(const Checkpoint& checkpoint);
void save_model(const PremierModel& model, const ModelMetadata& metadata, const std::filesystem::path& path);
LoadedModel load_model(const std::filesystem::path& path);

}  // namespace premier
