// Shape the drive that releases a Gaussian photon from a cavity, re-emit it,
// and report the waveform mismatch of the round trip.
#include <cstdio>
#include <vector>

#include "cavkit/timebin.hpp"

int main() {
  using namespace cavkit;
  const double kappa = 40.0;
  timebin::Waveform u{1.0, 0.0};
  auto drive = timebin::shape_drive(timebin::DriveDirection::emit, u, kappa);
  std::printf("peak drive over linewidth: %.4f\n", drive.peak_ratio);

  std::vector<double> grid;
  for (double t = -5.0; t <= 5.0; t += 0.01) grid.push_back(t);
  auto emitted = timebin::forward_waveform(drive.omega, kappa, grid);
  double err2 = 0.0;
  for (std::size_t k = 1; k < grid.size(); ++k)
    err2 += (grid[k] - grid[k - 1]) * sq(emitted[k] - u.value(grid[k]));
  std::printf("round-trip waveform mismatch (L2): %.3e\n", std::sqrt(err2));
  return 0;
}
