#include "svrdqn/reference.hpp"

#include <cmath>
#include <stdexcept>

namespace svrdqn::reference {

std::vector<double> naive_mlp_forward(const MlpNetwork& net, const std::vector<double>& input) {
  const auto& sizes = net.layer_sizes();
  const auto& acts = net.hidden_activations();
  const ParamVector& w = net.weights();

  std::vector<double> a = input;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    auto wm = w.block(2 * l);
    auto wb = w.block(2 * l + 1);
    std::vector<double> z(sizes[l + 1], 0.0);
    for (std::size_t r = 0; r < sizes[l + 1]; ++r)
      for (std::size_t c = 0; c < sizes[l]; ++c) z[r] += wm[r * sizes[l] + c] * a[c];
    for (std::size_t r = 0; r < sizes[l + 1]; ++r) z[r] += wb[r];
    if (l + 2 < sizes.size()) {
      for (auto& x : z)
        x = acts[l] == Activation::Relu ? std::max(0.0, x) : std::tanh(x);
    }
    a = std::move(z);
  }
  return a;
}

ParamVector naive_mean(const std::vector<ParamVector>& grads) {
  if (grads.empty()) throw std::invalid_argument("naive_mean: empty list");
  ParamVector sum = grads.front().zero_like();
  for (const auto& g : grads)
    for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += g[j];
  sum.scale(1.0 / static_cast<double>(grads.size()));
  return sum;
}

std::vector<ParamVector> naive_per_sample_gradients(const PerSampleGradFn& grad_fn,
                                                    const ParamVector& w,
                                                    const std::vector<std::size_t>& ids,
                                                    const ParamVector& proto) {
  std::vector<ParamVector> out;
  out.reserve(ids.size());
  for (std::size_t id : ids) {
    ParamVector g = proto.zero_like();
    grad_fn(id, w, g);
    out.push_back(std::move(g));
  }
  return out;
}

double naive_trace_variance(const std::vector<ParamVector>& samples) {
  if (samples.size() < 2) throw std::invalid_argument("naive_trace_variance: need >= 2 samples");
  const std::size_t dim = samples.front().size();
  std::vector<double> mean(dim, 0.0);
  for (const auto& s : samples)
    for (std::size_t j = 0; j < dim; ++j) mean[j] += s[j];
  for (auto& m : mean) m /= static_cast<double>(samples.size());
  double total = 0.0;
  for (const auto& s : samples)
    for (std::size_t j = 0; j < dim; ++j) {
      const double d = s[j] - mean[j];
      total += d * d;
    }
  return total / static_cast<double>(samples.size() - 1);
}

namespace {

bool is_terminal_cell(const GridworldSpec& spec, int row, int col) {
  const Cell c{row, col};
  if (c == spec.goal) return true;
  for (const Cell& p : spec.pits)
    if (c == p) return true;
  return false;
}

double cell_reward(const GridworldSpec& spec, int row, int col) {
  const Cell c{row, col};
  if (c == spec.goal) return 1.0;
  for (const Cell& p : spec.pits)
    if (c == p) return -1.0;
  return 0.0;
}

}  // namespace

GridworldPlan gridworld_value_iteration(const GridworldSpec& spec, double gamma, double tol,
                                        std::size_t max_iters) {
  const int n = static_cast<int>(spec.size);
  const std::size_t cells = spec.size * spec.size;
  auto idx = [n](int r, int c) { return static_cast<std::size_t>(r * n + c); };

  // executed-move outcome of the four nominal moves from (r, c)
  auto moved = [&](int r, int c, std::size_t action) {
    int nr = r, nc = c;
    switch (action) {
      case kUp: nr -= 1; break;
      case kDown: nr += 1; break;
      case kLeft: nc -= 1; break;
      case kRight: nc += 1; break;
    }
    if (nr < 0 || nc < 0 || nr >= n || nc >= n) {
      nr = r;
      nc = c;
    }
    return std::pair<int, int>(nr, nc);
  };

  GridworldPlan plan;
  plan.value.assign(cells, 0.0);
  plan.q.assign(cells, {0.0, 0.0, 0.0, 0.0});

  for (std::size_t it = 0; it < max_iters; ++it) {
    double delta = 0.0;
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        if (is_terminal_cell(spec, r, c)) continue;
        double best = -1e300;
        for (std::size_t a = 0; a < 4; ++a) {
          double qa = 0.0;
          for (std::size_t exec = 0; exec < 4; ++exec) {
            // slip: intended action with prob 1-p, plus p/4 for each of the four
            double prob = (exec == a) ? (1.0 - spec.slip_prob) : 0.0;
            prob += spec.slip_prob / 4.0;
            if (prob == 0.0) continue;
            const auto [nr, nc] = moved(r, c, exec);
            const double reward = cell_reward(spec, nr, nc);
            const double cont = is_terminal_cell(spec, nr, nc) ? 0.0 : plan.value[idx(nr, nc)];
            qa += prob * (reward + gamma * cont);
          }
          plan.q[idx(r, c)][a] = qa;
          best = std::max(best, qa);
        }
        delta = std::max(delta, std::abs(best - plan.value[idx(r, c)]));
        plan.value[idx(r, c)] = best;
      }
    }
    if (delta < tol) break;
  }

  plan.best_actions.assign(cells, {});
  for (std::size_t s = 0; s < cells; ++s) {
    double best = -1e300;
    for (double qa : plan.q[s]) best = std::max(best, qa);
    for (std::size_t a = 0; a < 4; ++a)
      if (plan.q[s][a] >= best - 1e-9) plan.best_actions[s].push_back(a);
  }
  return plan;
}

RolloutSummary gridworld_optimal_rollout(const GridworldSpec& spec, double gamma) {
  if (spec.slip_prob != 0.0)
    throw std::invalid_argument("gridworld_optimal_rollout: deterministic dynamics required");
  const GridworldPlan plan = gridworld_value_iteration(spec, gamma);
  const int n = static_cast<int>(spec.size);
  auto idx = [n](const Cell& c) { return static_cast<std::size_t>(c.row * n + c.col); };

  RolloutSummary out;
  Cell pos = spec.start;
  for (std::size_t t = 0; t < spec.episode_cap; ++t) {
    if (is_terminal_cell(spec, pos.row, pos.col)) break;
    const std::size_t a = plan.best_actions[idx(pos)].front();
    int nr = pos.row, nc = pos.col;
    switch (a) {
      case kUp: nr -= 1; break;
      case kDown: nr += 1; break;
      case kLeft: nc -= 1; break;
      case kRight: nc += 1; break;
    }
    if (nr < 0 || nc < 0 || nr >= n || nc >= n) {
      nr = pos.row;
      nc = pos.col;
    }
    pos = Cell{nr, nc};
    out.steps += 1;
    out.undiscounted_return += cell_reward(spec, pos.row, pos.col);
    if (is_terminal_cell(spec, pos.row, pos.col)) {
      out.reached_terminal = true;
      break;
    }
  }
  return out;
}

double chain_always_left_value(const ChainSpec& spec, double gamma) {
  (void)gamma;
  return spec.left_reward;  // one step from the start, gamma^0 * r
}

double chain_always_right_value(const ChainSpec& spec, double gamma) {
  const std::size_t steps = spec.length - 2;  // start at state 1, terminal at length-1
  return std::pow(gamma, static_cast<double>(steps - 1)) * spec.right_reward;
}

double chain_optimal_return(const ChainSpec& spec, double gamma) {
  return chain_always_right_value(spec, gamma) > chain_always_left_value(spec, gamma)
             ? spec.right_reward
             : spec.left_reward;
}

}  // namespace svrdqn::reference
