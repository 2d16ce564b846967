#include <catch2/catch_amalgamated.hpp>

#include "mfc/oracle.hpp"
#include "mfc/simulator.hpp"
#include "mfc/solver.hpp"
#include "testutil.hpp"

using namespace mfc;

namespace {

ModelSpec deterministic_cycle(std::int64_t n, int T) {
  // single action, 0 -> 1 -> 0 cycle, cost = number of agents in state 1
  ModelSpec spec;
  spec.types = {TypeBlock{n, 2, 1}};
  TableKernelDecl decl;
  decl.per_type.push_back({Matrix{{0.0, 1.0}, {1.0, 0.0}}});
  spec.minor_kernels.push_back(make_table_kernel(std::move(decl), spec.types));
  spec.major_kernel = make_sentinel_major();
  CostModel c;
  c.fn = [](const MeanField& z, int, std::span<const int>, int) {
    return static_cast<double>(z.counts[1]);
  };
  spec.costs.push_back(c);
  spec.objective = Objective::finite(T);
  return spec;
}

}  // namespace

TEST_CASE("deterministic dynamics: every rollout is identical and SE is zero") {
  const ModelSpec spec = deterministic_cycle(4, 4);
  const CoordinatedProblem pb = make_problem(spec);
  const FiniteSolution sol = solve_finite(pb);
  SimConfig cfg;
  cfg.seed = 3;
  cfg.rollouts = 8;
  cfg.initial = MeanField{{3, 1}, 4};
  const RolloutReport rep = rollout(spec, pb.states, sol.policies, cfg);
  // stage costs alternate: 1, 3, 1, 3
  CHECK(rep.mean == Catch::Approx(8.0));
  CHECK(rep.std_error == 0.0);
  CHECK(rep.horizon == 4);
  CHECK(rep.bias_bound == 0.0);
  CHECK(rep.stage_mean_field[0] == std::vector<double>{0.75, 0.25});
  CHECK(rep.stage_mean_field[1] == std::vector<double>{0.25, 0.75});
}

TEST_CASE("rollouts are reproducible from the seed") {
  const ModelSpec spec =
      testutil::random_model(7, 4, 2, 2, 2, 2, Objective::discounted(0.6, 1e-8));
  const CoordinatedProblem pb = make_problem(spec);
  const DiscountedSolution sol = solve_discounted(spec);
  SimConfig cfg;
  cfg.seed = 11;
  cfg.rollouts = 200;
  cfg.initial = MeanField{{2, 2}, 4};
  cfg.initial_major = 1;
  const RolloutReport a = rollout(spec, pb.states, sol.policy, cfg);
  const RolloutReport b = rollout(spec, pb.states, sol.policy, cfg);
  CHECK(a == b);
  cfg.seed = 12;
  const RolloutReport c = rollout(spec, pb.states, sol.policy, cfg);
  CHECK(a.mean != c.mean);
}

TEST_CASE("per-stage mean-field statistics stay on the simplex") {
  const ModelSpec spec =
      testutil::random_model(17, 5, 3, 2, 1, 1, Objective::finite(6));
  const CoordinatedProblem pb = make_problem(spec);
  const FiniteSolution sol = solve_finite(pb);
  SimConfig cfg;
  cfg.seed = 5;
  cfg.rollouts = 50;
  cfg.initial = MeanField{{2, 2, 1}, 5};
  const RolloutReport rep = rollout(spec, pb.states, sol.policies, cfg);
  for (const auto& stage : rep.stage_mean_field) {
    double sum = 0.0;
    for (double f : stage) sum += f;
    CHECK(sum == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("one-agent rollouts agree with the single-agent MDP value") {
  ModelSpec spec;
  spec.types = {TypeBlock{1, 2, 2}};
  TableKernelDecl decl;
  decl.per_type.push_back(
      {testutil::random_stochastic(2, 31), testutil::random_stochastic(2, 32)});
  spec.minor_kernels.push_back(make_table_kernel(std::move(decl), spec.types));
  spec.major_kernel = make_sentinel_major();
  SeparableDecl sd;
  sd.action_cost = {{0.0, 0.4}};
  spec.costs.push_back(make_separable_cost(sd, {0, 0}));
  // add a state occupancy charge through a second separable-like term
  CostModel c;
  c.fn = [inner = spec.costs[0].fn](const MeanField& z, int x0, std::span<const int> g,
                                    int u0) {
    return inner(z, x0, g, u0) + 2.0 * z.counts[1];
  };
  spec.costs = {c};
  spec.objective = Objective::finite(5);

  const CoordinatedProblem pb = make_problem(spec);
  const FiniteSolution sol = solve_finite(pb);
  const auto idx0 = pb.states.try_index(MeanField::point_mass(2, 0, 1));
  REQUIRE(idx0);
  // the classical single-agent MDP is the reference value here
  const oracle::SingleAgentSolution ref = oracle::single_agent_mdp(spec);
  CHECK(sol.values[0].at(*idx0, 0) == Catch::Approx(ref.values[0][0]).margin(1e-10));

  SimConfig cfg;
  cfg.seed = 99;
  cfg.rollouts = 20000;
  cfg.initial = MeanField::point_mass(2, 0, 1);
  const RolloutReport rep = rollout(spec, pb.states, sol.policies, cfg);
  CHECK(std::abs(rep.mean - ref.values[0][0]) <= 3.0 * rep.std_error);
}

TEST_CASE("agents sharing a state always receive the same action") {
  // forcing kernel: action 1 sends every agent to state 1 with certainty
  ModelSpec spec;
  spec.types = {TypeBlock{3, 2, 2}};
  TableKernelDecl decl;
  decl.per_type.push_back({Matrix{{1.0, 0.0}, {0.0, 1.0}}, Matrix{{0.0, 1.0}, {0.0, 1.0}}});
  spec.minor_kernels.push_back(make_table_kernel(std::move(decl), spec.types));
  spec.major_kernel = make_sentinel_major();
  spec.costs.push_back(make_zero_cost());
  spec.objective = Objective::finite(1);
  const CoordinatedProblem pb = make_problem(spec);
  // hand-built policy: state 0 plays the forcing action
  const PrescriptionSet actions = enumerate_prescriptions(spec);
  PolicyTable policy{pb.states.size(), 1, actions,
                     std::vector<std::uint32_t>(pb.states.size(), 0)};
  for (std::uint64_t i = 0; i < pb.states.size(); ++i)
    policy.pair[i] = static_cast<std::uint32_t>(actions.rank(std::vector<int>{1, 0}));
  SimConfig cfg;
  cfg.rollouts = 4;
  cfg.initial = MeanField{{3, 0}, 3};
  const RolloutReport rep = rollout(spec, pb.states, policy, cfg);
  (void)rep;
  // all three agents were forced identically; next stage is all-active
  SimConfig cfg2 = cfg;
  cfg2.horizon = 2;
  const RolloutReport rep2 = rollout(spec, pb.states, policy, cfg2);
  CHECK(rep2.stage_mean_field[1] == std::vector<double>{0.0, 1.0});
}

TEST_CASE("rollout reports a policy lookup miss by state") {
  const ModelSpec spec = deterministic_cycle(2, 2);
  const CoordinatedProblem pb = make_problem(spec);
  const FiniteSolution sol = solve_finite(pb);
  // restrict the policy domain to the initial point only; the successor
  // (0, 2) -> (2, 0) flips outside it
  const StateSpace restricted =
      StateSpace::restricted(2, 2, {MeanField{{0, 2}, 2}});
  PolicyTable tiny{1, 1, sol.policies[0].actions, {sol.policies[0].pair[0]}};
  SimConfig cfg;
  cfg.rollouts = 1;
  cfg.initial = MeanField{{0, 2}, 2};
  CHECK_THROWS_WITH(rollout(spec, restricted, std::span<const PolicyTable>(&tiny, 1), cfg),
                    Catch::Matchers::ContainsSubstring("(2,0)"));
}

TEST_CASE("empirical one-step frequencies match the exact kernel") {
  SECTION("deterministic kernel: deviation is exactly zero") {
    const ModelSpec spec = deterministic_cycle(3, 1);
    const auto rep = empirical_kernel_check(spec, MeanField{{2, 1}, 3}, 0,
                                            std::vector<int>{0, 0}, 0, 500, 1);
    CHECK(rep.max_abs_dev == 0.0);
    CHECK(rep.chi_square == 0.0);
  }
  SECTION("two agents, natural chain, one million samples within 0.002") {
    ModelSpec spec;
    spec.types = {TypeBlock{2, 2, 1}};
    TableKernelDecl decl;
    decl.per_type.push_back({Matrix{{0.6, 0.4}, {0.3, 0.7}}});
    spec.minor_kernels.push_back(make_table_kernel(std::move(decl), spec.types));
    spec.major_kernel = make_sentinel_major();
    spec.costs.push_back(make_zero_cost());
    spec.objective = Objective::finite(1);
    const auto rep = empirical_kernel_check(spec, MeanField{{2, 0}, 2}, 0,
                                            std::vector<int>{0, 0}, 0, 1'000'000, 2024);
    CHECK(rep.max_abs_dev <= 0.002);
    CHECK(rep.dof == 2);
  }
  SECTION("frequencies are insensitive to the joint assignment behind z") {
    ModelSpec spec;
    spec.types = {TypeBlock{3, 2, 1}};
    TableKernelDecl decl;
    decl.per_type.push_back({Matrix{{0.6, 0.4}, {0.3, 0.7}}});
    spec.minor_kernels.push_back(make_table_kernel(std::move(decl), spec.types));
    spec.major_kernel = make_sentinel_major();
    spec.costs.push_back(make_zero_cost());
    spec.objective = Objective::finite(1);
    const MeanField z{{2, 1}, 3};
    const std::vector<int> assign_a{0, 0, 1};
    const std::vector<int> assign_b{1, 0, 0};
    const auto ra = empirical_kernel_check(spec, z, 0, std::vector<int>{0, 0}, 0, 200'000,
                                           7, assign_a);
    const auto rb = empirical_kernel_check(spec, z, 0, std::vector<int>{0, 0}, 0, 200'000,
                                           8, assign_b);
    CHECK(ra.max_abs_dev <= 0.005);
    CHECK(rb.max_abs_dev <= 0.005);
  }
}

TEST_CASE("discounted rollouts land within the certified error of the DP value") {
  ModelSpec spec = testutil::load_model("service_provider.json");
  spec.types[0].population = 12;
  const CoordinatedProblem pb = make_problem(spec);
  const DiscountedSolution sol = solve_discounted(spec);
  SimConfig cfg;
  cfg.seed = 2025;
  cfg.rollouts = 4000;
  cfg.bias_budget = 1e-3;
  cfg.initial = MeanField{{6, 6}, 12};
  cfg.initial_major = 0;
  const RolloutReport rep = rollout(spec, pb.states, sol.policy, cfg);
  const double v = sol.value.at(*pb.states.try_index(cfg.initial), 0);
  CHECK(std::abs(rep.mean - v) <= 3.0 * rep.std_error + rep.bias_bound);
  CHECK(rep.bias_bound > 0.0);
  CHECK(rep.bias_bound <= 1e-3);
}
