#include "nsmkl/dataio.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "nsmkl/error.hpp"

namespace nsmkl {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_cells(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

std::vector<std::vector<std::string>> read_rows(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::io, "cannot open '" + path.string() + "'");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::vector<std::string> row;
    for (auto cell : split_cells(line)) row.emplace_back(cell);
    rows.push_back(std::move(row));
  }
  return rows;
}

double parse_number(std::string_view cell, const std::filesystem::path& path, std::size_t line) {
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty() || !std::isfinite(value)) {
    fail(ErrorCode::parse, path.string() + ":" + std::to_string(line) + ": non-numeric cell '" + std::string(cell) + "'");
  }
  return value;
}

SampleLabel parse_label(std::string_view label, std::string_view instrument, const std::filesystem::path& path,
                        std::size_t line) {
  SampleLabel out;
  if (label == "target" || label == "1" || label == "bonafide") {
    out.label = Label::target;
  } else if (label == "nontarget" || label == "0" || label == "attack") {
    out.label = Label::nontarget;
  } else {
    fail(ErrorCode::parse, path.string() + ":" + std::to_string(line) + ": unknown label '" + std::string(label) + "'");
  }
  out.instrument = std::string(instrument);
  return out;
}

}  // namespace

IdTable read_id_table(const std::filesystem::path& path) {
  auto rows = read_rows(path);
  std::size_t first = 0;
  if (!rows.empty() && !rows.front().empty() && rows.front().front() == "sample_id") first = 1;
  require(rows.size() > first, ErrorCode::parse, "'" + path.string() + "' has no data rows");

  const std::size_t width = rows[first].size();
  require(width >= 2, ErrorCode::parse, "'" + path.string() + "' needs an id column and at least one value");
  IdTable table;
  table.values.resize(static_cast<Index>(rows.size() - first), static_cast<Index>(width - 1));
  for (std::size_t r = first; r < rows.size(); ++r) {
    const auto& row = rows[r];
    require(row.size() == width, ErrorCode::parse,
            path.string() + ":" + std::to_string(r + 1) + ": expected " + std::to_string(width) + " cells");
    table.ids.push_back(row[0]);
    for (std::size_t c = 1; c < width; ++c) {
      table.values(static_cast<Index>(r - first), static_cast<Index>(c - 1)) = parse_number(row[c], path, r + 1);
    }
  }
  return table;
}

void FeatureDataset::validate() const {
  require(!views.empty(), ErrorCode::shape, "dataset has no views");
  require(!sample_ids.empty(), ErrorCode::shape, "dataset has no samples");
  for (std::size_t g = 0; g < views.size(); ++g) {
    require(views[g].rows() == size(), ErrorCode::shape,
            "view " + std::to_string(g) + " has " + std::to_string(views[g].rows()) + " rows, expected " +
                std::to_string(size()));
    require(views[g].cols() >= 1, ErrorCode::shape, "view " + std::to_string(g) + " has no features");
    require(views[g].allFinite(), ErrorCode::parse, "view " + std::to_string(g) + " has non-finite entries");
  }
  std::unordered_set<std::string> seen;
  for (const auto& id : sample_ids) {
    require(seen.insert(id).second, ErrorCode::parse, "duplicate sample id '" + id + "'");
  }
  if (labels) require(labels->size() == sample_ids.size(), ErrorCode::shape, "label count differs from sample count");
}

FeatureDataset FeatureDataset::subset(std::span<const Index> rows) const {
  FeatureDataset out;
  for (const auto& view : views) {
    Matrix m(static_cast<Index>(rows.size()), view.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Index>(i)) = view.row(rows[i]);
    out.views.push_back(std::move(m));
  }
  for (Index r : rows) out.sample_ids.push_back(sample_ids[static_cast<std::size_t>(r)]);
  if (labels) {
    out.labels.emplace();
    for (Index r : rows) out.labels->push_back((*labels)[static_cast<std::size_t>(r)]);
  }
  return out;
}

bool operator==(const FeatureDataset& a, const FeatureDataset& b) {
  if (a.sample_ids != b.sample_ids || a.labels != b.labels || a.views.size() != b.views.size()) return false;
  for (std::size_t g = 0; g < a.views.size(); ++g) {
    if (a.views[g].rows() != b.views[g].rows() || a.views[g].cols() != b.views[g].cols()) return false;
    if (!(a.views[g].array() == b.views[g].array()).all()) return false;
  }
  return true;
}

std::vector<SampleLabel> load_labels(const std::filesystem::path& path, std::span<const std::string> ids) {
  auto rows = read_rows(path);
  std::unordered_map<std::string, SampleLabel> by_id;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (r == 0 && row.front() == "sample_id") continue;
    require(row.size() == 2 || row.size() == 3, ErrorCode::parse,
            path.string() + ":" + std::to_string(r + 1) + ": expected sample_id,label[,instrument]");
    auto label = parse_label(row[1], row.size() == 3 ? std::string_view(row[2]) : std::string_view(), path, r + 1);
    require(by_id.emplace(row[0], label).second, ErrorCode::parse, "duplicate label for '" + row[0] + "'");
  }
  std::vector<SampleLabel> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    require(it != by_id.end(), ErrorCode::shape, "no label for sample '" + id + "'");
    out.push_back(it->second);
  }
  return out;
}

FeatureDataset load_dataset(std::span<const std::filesystem::path> view_paths,
                            const std::optional<std::filesystem::path>& labels_path) {
  require(!view_paths.empty(), ErrorCode::invalid_argument, "at least one view file is required");
  FeatureDataset ds;
  auto first = read_id_table(view_paths[0]);
  ds.sample_ids = first.ids;
  ds.views.push_back(std::move(first.values));

  std::unordered_map<std::string, Index> position;
  for (std::size_t i = 0; i < ds.sample_ids.size(); ++i) {
    require(position.emplace(ds.sample_ids[i], static_cast<Index>(i)).second, ErrorCode::parse,
            "duplicate sample id '" + ds.sample_ids[i] + "'");
  }

  for (std::size_t g = 1; g < view_paths.size(); ++g) {
    auto table = read_id_table(view_paths[g]);
    require(table.values.rows() == ds.size(), ErrorCode::shape,
            "row-count mismatch: '" + view_paths[g].string() + "' has " + std::to_string(table.values.rows()) +
                " rows, expected " + std::to_string(ds.size()));
    Matrix aligned(table.values.rows(), table.values.cols());
    std::vector<bool> filled(ds.sample_ids.size(), false);
    for (std::size_t r = 0; r < table.ids.size(); ++r) {
      auto it = position.find(table.ids[r]);
      require(it != position.end(), ErrorCode::shape,
              "sample '" + table.ids[r] + "' in '" + view_paths[g].string() + "' is missing from the first view");
      require(!filled[static_cast<std::size_t>(it->second)], ErrorCode::parse, "duplicate sample id '" + table.ids[r] + "'");
      filled[static_cast<std::size_t>(it->second)] = true;
      aligned.row(it->second) = table.values.row(static_cast<Index>(r));
    }
    ds.views.push_back(std::move(aligned));
  }

  if (labels_path) ds.labels = load_labels(*labels_path, ds.sample_ids);
  ds.validate();
  return ds;
}

std::string format_double(double value) {
  char buffer[64];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  require(ec == std::errc(), ErrorCode::internal, "cannot format double");
  return std::string(buffer, ptr);
}

void write_id_table(const std::filesystem::path& path, std::span<const std::string> ids,
                    std::span<const std::string> header, const Matrix& values) {
  require(static_cast<Index>(ids.size()) == values.rows(), ErrorCode::shape, "id count differs from row count");
  std::ofstream out(path);
  require(out.good(), ErrorCode::io, "cannot write '" + path.string() + "'");
  if (!header.empty()) {
    out << "sample_id";
    for (const auto& h : header) out << ',' << h;
    out << '\n';
  }
  for (Index r = 0; r < values.rows(); ++r) {
    out << ids[static_cast<std::size_t>(r)];
    for (Index c = 0; c < values.cols(); ++c) out << ',' << format_double(values(r, c));
    out << '\n';
  }
  require(out.good(), ErrorCode::io, "write failed for '" + path.string() + "'");
}

void write_labels(const std::filesystem::path& path, std::span<const std::string> ids,
                  std::span<const SampleLabel> labels) {
  require(ids.size() == labels.size(), ErrorCode::shape, "id count differs from label count");
  std::ofstream out(path);
  require(out.good(), ErrorCode::io, "cannot write '" + path.string() + "'");
  out << "sample_id,label,instrument\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out << ids[i] << ',' << (labels[i].label == Label::target ? "target" : "nontarget") << ','
        << labels[i].instrument << '\n';
  }
}

}  // namespace nsmkl
