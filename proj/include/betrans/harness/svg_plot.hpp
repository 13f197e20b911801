#pragma once

#include "betrans/common.hpp"

#include <string>
#include <vector>

namespace betrans::svg {

struct Point {
  Real x, mean, stderr_;
};

struct Series {
  std::string name;
  std::vector<Point> points;
};

// Learning-curve panel: one line per series with a ±stderr ribbon.
void write_learning_curves(const std::string& path, const std::string& title,
                           const std::vector<Series>& series);

}  // namespace betrans::svg
