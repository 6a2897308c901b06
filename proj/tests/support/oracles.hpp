#pragma once

// Independent reference implementations. Deliberately naive: they share no
// code with the library beyond plain data types.

#include <array>
#include <vector>

#include "mixvox/core.hpp"
#include "mixvox/dataset.hpp"
#include "mixvox/mlp.hpp"

namespace oracle {

using mixvox::Rgb;

/// c[(ix << 2) | (iy << 1) | iz] is the corner value; f is the in-cell offset.
double trilinear8(const std::array<double, 8>& c, double fx, double fy, double fz);

struct Composite {
  Rgb color{};
  double opacity = 0;
  double depth = 0;
};

/// Recomputes every transmittance from scratch as exp(-sum_{j<i} sigma_j delta_j).
Composite composite(const std::vector<double>& sigma, const std::vector<Rgb>& color, const std::vector<double>& delta,
                    const std::vector<double>& s, const Rgb& background);

/// Straight double loop over every 11x11 window with a 2D Gaussian kernel.
double ssim(const mixvox::Image& a, const mixvox::Image& b);

/// Forward pass reading the weights entry by entry.
std::vector<double> mlp_forward(const mixvox::Mlp& net, const std::vector<double>& in);

double softplus(double x);
double logistic(double x);

/// Population standard deviation over t and channels.
double pixel_std(const std::vector<Rgb>& seq);

}  // namespace oracle
