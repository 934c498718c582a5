#pragma once

#include <Eigen/Dense>

namespace mgtr {

// Row-major throughout: matches the on-disk checkpoint layout and the
// row-major flattening rules used for rank-3 quantities.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;
using Vec2 = Eigen::Vector2d;
using MatX2 = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;
using Index = Eigen::Index;

inline constexpr double kPi = 3.14159265358979323846;

}  // namespace mgtr
