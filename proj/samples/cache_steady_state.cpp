// Steady state of a two-list RANDOM(m) cache: mean field, refined mean field
// and the exact product-form recurrence.
#include "hetmf/hetmf.hpp"

#include <cstdio>

int main() {
  using namespace hetmf;
  for (std::size_t n : {10, 20, 30}) {
    const auto cfg = cache::zipf_config(n, 0.5, 0.3, 2);
    const auto model = cache::build_random_m(cfg);
    const auto exact = cache::exact_steady_state(cfg);

    const auto fp = fixed_point(model, cache::occupancy_state(cfg));
    const auto steady = refined_steady_state(model, fp.x);
    const StateVector refined = fp.x + steady.state.v;

    const double e_mf = cache::cache_error(fp.x, exact, n);
    const double e_rf = cache::cache_error(refined, exact, n);
    std::printf("n=%2zu  mf %.3e (n*err %.3f)  refined %.3e (n^2*err %.3f)\n", n, e_mf, n * e_mf, e_rf,
                n * n * e_rf);
  }

  // Hit probability of the most popular object in the last list.
  const auto cfg = cache::zipf_config(10, 0.5, 0.3, 2);
  const auto model = cache::build_random_m(cfg);
  const auto fp = fixed_point(model, cache::occupancy_state(cfg));
  std::printf("P[object 1 in list 2]: mf %.4f, exact %.4f\n", fp.x[model.index(0, 2)],
              cache::exact_steady_state(cfg)[model.index(0, 2)]);
}
