// Classical Lyapunov spectrum of the Lorenz system along a few r values,
// followed by one prediction from an untrained network.
#include <cstdio>

#include <lyapnet/lyapnet.hpp>

int main() {
  using namespace lyapnet;
  for (double r : {0.5, 15.0, 28.0, 99.65, 160.0}) {
    SystemSpec spec;
    spec.params.r = r;
    const auto [les, end] = benettin_spectrum(spec, default_initial_state(spec.kind), LEConfig::desk());
    std::printf("r = %7.2f   LE = (%+.4f, %+.4f, %+.4f)   sum %+.4f (expected %+.4f)\n", r, les[0], les[1], les[2],
                les[0] + les[1] + les[2], divergence(spec));
  }

  const auto series = generate_prediction_series(SystemKind::Lorenz, SystemParams{}, CounterRng(0), 0);
  const auto out = forward(init_params(Architecture{}, 1), series);
  std::printf("untrained network at r = 28: (%+.4f, %+.4f, %+.4f)\n", out[0], out[1], out[2]);
}
