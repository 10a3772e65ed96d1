#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ddrdro/core.hpp"

namespace ddrdro {

struct CsvDataset {
  LabeledDataset data;
  std::vector<std::string> predictor_names;
};

/// Header row required. The `label` column holds -1/+1 or 0/1 (0 maps to -1);
/// every other column is a numeric predictor.
CsvDataset read_dataset_csv(std::istream& is);
CsvDataset load_dataset_csv(const std::string& path);

void write_dataset_csv(std::ostream& os, const LabeledDataset& data, const std::vector<std::string>& names = {});

/// Point cloud for transport problems: numeric columns, optional `mass`
/// column (uniform masses when absent, normalized to sum to one).
struct PointCloud {
  Matrix points;
  Vector mass;
};

PointCloud read_point_cloud_csv(std::istream& is);
PointCloud load_point_cloud_csv(const std::string& path);

std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace ddrdro
