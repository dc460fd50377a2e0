#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nsmkl/types.hpp"

namespace nsmkl {

enum class Label { target, nontarget };

struct SampleLabel {
  Label label = Label::target;
  // Attack instrument species for non-targets; may be empty.
  std::string instrument;

  friend bool operator==(const SampleLabel&, const SampleLabel&) = default;
};

/// n samples seen through G feature views (one matrix per view, one row per sample).
struct FeatureDataset {
  std::vector<Matrix> views;
  std::vector<std::string> sample_ids;
  std::optional<std::vector<SampleLabel>> labels;

  Index size() const { return static_cast<Index>(sample_ids.size()); }
  Index view_count() const { return static_cast<Index>(views.size()); }

  /// Checks row counts, finiteness, id uniqueness and label count.
  void validate() const;

  FeatureDataset subset(std::span<const Index> rows) const;

};

/// Exact equality of ids, labels and every view entry.
bool operator==(const FeatureDataset& a, const FeatureDataset& b);

/// A CSV table whose first column is a sample id and whose remaining cells are numeric.
struct IdTable {
  std::vector<std::string> ids;
  Matrix values;
};

/// Reads an id-keyed numeric CSV. A first line whose first cell is "sample_id" is a header.
IdTable read_id_table(const std::filesystem::path& path);

/// Loads one CSV per view (rows aligned by sample id to the first view) and an optional labels CSV
/// with rows `sample_id,label[,instrument]`, label in {target, nontarget, 1, 0}.
FeatureDataset load_dataset(std::span<const std::filesystem::path> view_paths,
                            const std::optional<std::filesystem::path>& labels_path = std::nullopt);

std::vector<SampleLabel> load_labels(const std::filesystem::path& path, std::span<const std::string> ids);

void write_id_table(const std::filesystem::path& path, std::span<const std::string> ids,
                    std::span<const std::string> header, const Matrix& values);

void write_labels(const std::filesystem::path& path, std::span<const std::string> ids,
                  std::span<const SampleLabel> labels);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

}  // namespace nsmkl
