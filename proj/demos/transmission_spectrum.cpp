// Sweep the weak-drive transmission of a strongly coupled cavity-qubit pair
// and print the doublet structure as CSV on stdout.
#include <cstdio>

#include "cavkit/cqed.hpp"

int main() {
  using namespace cavkit;
  cqed::CavityQubitParams p;
  p.cavity_freq = 0.0;
  p.qubit_freq = 0.0;
  p.g = 1.0;
  p.kappa_in = p.kappa_out = 0.05;
  std::printf("omega,transmission_sq\n");
  for (double w = -2.0; w <= 2.0; w += 0.005)
    std::printf("%.6f,%.8e\n", w, std::norm(cqed::vacuum_rabi_transmission(w, p)));
  return 0;
}
