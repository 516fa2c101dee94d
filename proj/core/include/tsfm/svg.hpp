#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tsfm/tensor.hpp"

namespace tsfm::svg {

struct Series {
  std::string label;
  std::vector<double> x, y;
  std::string color;  // CSS color
};

void write_line_chart(const std::filesystem::path& file, const std::string& title,
                      const std::vector<Series>& series, const std::string& x_label,
                      const std::string& y_label);

void write_scatter(const std::filesystem::path& file, const std::string& title,
                   const std::vector<Series>& series, const std::string& x_label,
                   const std::string& y_label);

// Signed diverging heat map (blue negative, red positive), rows bottom-up.
void write_heatmap(const std::filesystem::path& file, const std::string& title,
                   const Tensor& matrix, const std::string& x_label, const std::string& y_label);

}  // namespace tsfm::svg
