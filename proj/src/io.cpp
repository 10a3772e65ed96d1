#include "ddrdro/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "ddrdro/errors.hpp"

namespace ddrdro {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& cell, std::size_t line_no, const std::string& column) {
  const std::string t = trim(cell);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (t.empty() || used != t.size() || !std::isfinite(v))
    throw DataError("line " + std::to_string(line_no) + ": column '" + column + "' is not a finite number: '" + t + "'");
  return v;
}

bool blank(const std::string& line) { return trim(line).empty(); }

}  // namespace

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

CsvDataset read_dataset_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw DataError("data file is empty (header row required)");
  const auto header = split_csv_line(line);
  const auto it = std::find(header.begin(), header.end(), "label");
  if (it == header.end()) throw DataError("missing required column 'label'");
  const auto label_col = static_cast<std::size_t>(it - header.begin());
  std::vector<std::string> names;
  for (std::size_t c = 0; c < header.size(); ++c)
    if (c != label_col) names.push_back(header[c]);
  if (names.empty()) throw DataError("data file has no predictor columns");

  std::vector<std::vector<double>> rows;
  std::vector<double> raw_labels;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (blank(line)) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) + " columns");
    std::vector<double> row;
    row.reserve(names.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const double v = parse_number(cells[c], line_no, header[c]);
      if (c == label_col)
        raw_labels.push_back(v);
      else
        row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("data file has no rows");

  const bool zero_one = std::all_of(raw_labels.begin(), raw_labels.end(), [](double v) { return v == 0.0 || v == 1.0; });
  const bool pm_one = std::all_of(raw_labels.begin(), raw_labels.end(), [](double v) { return v == -1.0 || v == 1.0; });
  if (!zero_one && !pm_one) throw DataError("column 'label' must hold -1/+1 or 0/1 values");

  Matrix f(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(names.size()));
  std::vector<int> labels;
  labels.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < names.size(); ++c)
      f(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    labels.push_back(raw_labels[r] > 0.5 ? 1 : -1);
  }
  return {LabeledDataset(std::move(f), std::move(labels)), std::move(names)};
}

CsvDataset load_dataset_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open data file: " + path);
  return read_dataset_csv(is);
}

void write_dataset_csv(std::ostream& os, const LabeledDataset& data, const std::vector<std::string>& names) {
  const std::size_t d = data.dim();
  for (std::size_t c = 0; c < d; ++c) os << (c < names.size() ? names[c] : "x" + std::to_string(c)) << ',';
  os << "label\n" << std::setprecision(17);
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t c = 0; c < d; ++c)
      os << data.features()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) << ',';
    os << data.y(i) << '\n';
  }
}

PointCloud read_point_cloud_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw DataError("point cloud file is empty (header row required)");
  const auto header = split_csv_line(line);
  const auto it = std::find(header.begin(), header.end(), "mass");
  const bool has_mass = it != header.end();
  const auto mass_col = static_cast<std::size_t>(it - header.begin());
  const std::size_t d = header.size() - (has_mass ? 1 : 0);
  if (d == 0) throw DataError("point cloud has no coordinate columns");

  std::vector<std::vector<double>> rows;
  std::vector<double> masses;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (blank(line)) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) + " columns");
    std::vector<double> row;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const double v = parse_number(cells[c], line_no, header[c]);
      if (has_mass && c == mass_col) {
        if (v < 0.0) throw DataError("line " + std::to_string(line_no) + ": negative mass");
        masses.push_back(v);
      } else {
        row.push_back(v);
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("point cloud has no rows");

  PointCloud pc;
  pc.points.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < d; ++c) pc.points(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  pc.mass.resize(static_cast<Eigen::Index>(rows.size()));
  if (has_mass) {
    double total = 0.0;
    for (double m : masses) total += m;
    if (!(total > 0.0)) throw DataError("point cloud masses sum to zero");
    for (std::size_t r = 0; r < rows.size(); ++r) pc.mass[static_cast<Eigen::Index>(r)] = masses[r] / total;
  } else {
    pc.mass.setConstant(1.0 / static_cast<double>(rows.size()));
  }
  return pc;
}

PointCloud load_point_cloud_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open point cloud file: " + path);
  return read_point_cloud_csv(is);
}

}  // namespace ddrdro
