#include "las/net.hpp"

#include <cmath>

namespace las {

Tensor uniform_init(std::vector<std::int64_t> shape, std::int64_t fan_in, Prng& prng) {
  Tensor t(std::move(shape));
  const double k = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& x : t.v) x = prng.next_range(-k, k);
  return t;
}

void init_lstm_params(ParameterStore& store, const std::string& prefix, std::int64_t input_dim,
                      std::int64_t hidden, Prng& prng) {
  store.put(prefix + ".Wx", uniform_init({4 * hidden, input_dim}, input_dim, prng));
  store.put(prefix + ".Wh", uniform_init({4 * hidden, hidden}, hidden, prng));
  Tensor b({4 * hidden});
  for (std::int64_t i = hidden; i < 2 * hidden; ++i) b.v[static_cast<std::size_t>(i)] = 1.0;  // forget gate
  store.put(prefix + ".b", std::move(b));
}

}  // namespace las
