#include "chunkgrpo/serialize.hpp"

#include <fstream>

#include "chunkgrpo/error.hpp"

namespace chunkgrpo {

Json to_json(const ChunkPlan& plan) {
  return Json{{"sizes", plan.sizes}, {"weights", plan.weights}, {"transitions", plan.total()}};
}

ChunkPlan plan_from_json(const Json& j) {
  try {
    auto sizes = j.at("sizes").get<std::vector<std::size_t>>();
    std::vector<double> weights;
    if (j.contains("weights")) {
      weights = j.at("weights").get<std::vector<double>>();
    }
    return ChunkPlan::from_sizes(std::move(sizes), std::move(weights));
  } catch (const Json::exception& e) {
    throw InputError(std::string("plan json: ") + e.what());
  }
}

Json to_json(const DynamicsProfile& profile) {
  return Json{{"values", profile.values},
              {"trajectories", profile.trajectories},
              {"conditions", profile.conditions},
              {"skipped", profile.skipped}};
}

DynamicsProfile profile_from_json(const Json& j) {
  try {
    DynamicsProfile p;
    p.values = j.at("values").get<std::vector<double>>();
    p.trajectories = j.value("trajectories", std::size_t{0});
    p.conditions = j.value("conditions", std::vector<std::size_t>{});
    p.skipped = j.value("skipped", std::size_t{0});
    if (p.values.empty()) {
      throw InputError("profile json: empty profile");
    }
    return p;
  } catch (const Json::exception& e) {
    throw InputError(std::string("profile json: ") + e.what());
  }
}

Json to_json(const InvarianceReport& report) {
  Json matrix = Json::array();
  for (const auto& row : report.correlation) {
    Json r = Json::array();
    for (const auto& v : row) {
      r.push_back(v ? Json(*v) : Json(nullptr));
    }
    matrix.push_back(std::move(r));
  }
  return Json{{"correlation", std::move(matrix)},
              {"min_correlation", report.min_correlation ? Json(*report.min_correlation) : Json(nullptr)},
              {"undefined_pairs", report.undefined_pairs}};
}

Json to_json(const Transition& tr) {
  return Json{{"t_hi", tr.t_hi},         {"t_lo", tr.t_lo},     {"state", tr.state},
              {"mean", tr.mean},         {"sigma", tr.sigma},   {"std", tr.std},
              {"noise", tr.noise},       {"sample", tr.sample}, {"logp_old", tr.logp_old},
              {"stochastic", tr.stochastic}};
}

Json to_json(const Trajectory& traj) {
  Json transitions = Json::array();
  for (const auto& tr : traj.transitions) {
    transitions.push_back(to_json(tr));
  }
  return Json{{"condition", traj.condition},
              {"states", traj.states},
              {"transitions", std::move(transitions)},
              {"reward", traj.reward ? Json(*traj.reward) : Json(nullptr)},
              {"advantage", traj.advantage ? Json(*traj.advantage) : Json(nullptr)}};
}

Json to_json(const TrajectoryGroup& group) {
  Json members = Json::array();
  for (const auto& m : group.members) {
    members.push_back(to_json(m));
  }
  return Json{{"condition", group.condition},
              {"reward_mean", group.reward_mean},
              {"reward_std", group.reward_std},
              {"members", std::move(members)}};
}

Json to_json(const DataSpec& data) {
  Json comps = Json::array();
  for (const auto& c : data.components) {
    comps.push_back(Json{{"mean", c.mean}, {"covariance", c.covariance}, {"mode", c.mode}});
  }
  return Json{{"kind", distribution_name(data.kind)},
              {"dim", data.dim},
              {"components", std::move(comps)},
              {"conditions", data.conditions}};
}

void write_json(const Json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw StateError("cannot write " + path.string());
  }
  out << j.dump(2) << '\n';
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw InputError("cannot read " + path.string());
  }
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

}  // namespace chunkgrpo
