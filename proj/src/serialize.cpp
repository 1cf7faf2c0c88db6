#include "tendonopt/serialize.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace tendonopt {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw std::invalid_argument(path + ": " + msg);
}

// Tracks which keys of an object were consumed; leftovers are errors.
class StrictReader {
 public:
  StrictReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected a JSON object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& require(const std::string& key) {
    if (!j_.contains(key)) fail(path_, "missing required key '" + key + "'");
    seen_.insert(key);
    return j_.at(key);
  }

  const json* find(const std::string& key) {
    if (!j_.contains(key)) return nullptr;
    seen_.insert(key);
    return &j_.at(key);
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    try {
      return v->get<T>();
    } catch (const json::exception& e) {
      fail(path_ + "." + key, e.what());
    }
  }

  std::string key_path(const std::string& key) const { return path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key()))
        fail(path_, "unknown key '" + it.key() + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json vector_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd vector_from_json(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array of numbers");
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) fail(path, "expected an array of numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) fail(path, "expected a non-empty nested array");
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  if (cols == 0) fail(path, "expected a non-empty nested array");
  Eigen::MatrixXd m(j.size(), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols)
      fail(path, "rows must have equal length");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) fail(path, "expected numeric entries");
      m(r, c) = j[r][c].get<double>();
    }
  }
  return m;
}

Eigen::Vector2d point_from_json(const json& j, const std::string& path) {
  const Eigen::VectorXd v = vector_from_json(j, path);
  if (v.size() != 2) fail(path, "expected a 2D point [x, y]");
  return {v[0], v[1]};
}

}  // namespace

nlohmann::json design_to_json(const DesignParams& d) {
  return json{{"flexion_radii", matrix_to_json(d.flexion_radii)},
              {"winch_radii", vector_to_json(d.winch_radii)},
              {"extension_radius", d.extension_radius},
              {"pretension", vector_to_json(d.pretension)},
              {"link_lengths", vector_to_json(d.link_lengths)},
              {"spring_k", d.spring_k},
              {"joint_limits", json::array({d.joint_limit_lo, d.joint_limit_hi})}};
}

DesignParams design_from_json(const nlohmann::json& j, const std::string& path) {
  StrictReader r(j, path);
  DesignParams d = DesignParams::initial();
  if (const json* v = r.find("flexion_radii"))
    d.flexion_radii = matrix_from_json(*v, r.key_path("flexion_radii"));
  if (const json* v = r.find("winch_radii"))
    d.winch_radii = vector_from_json(*v, r.key_path("winch_radii"));
  d.extension_radius = r.get("extension_radius", d.extension_radius);
  if (const json* v = r.find("pretension"))
    d.pretension = vector_from_json(*v, r.key_path("pretension"));
  if (const json* v = r.find("link_lengths"))
    d.link_lengths = vector_from_json(*v, r.key_path("link_lengths"));
  d.spring_k = r.get("spring_k", d.spring_k);
  if (const json* v = r.find("joint_limits")) {
    const Eigen::VectorXd lim = vector_from_json(*v, r.key_path("joint_limits"));
    if (lim.size() != 2) fail(r.key_path("joint_limits"), "expected [lo, hi]");
    d.joint_limit_lo = lim[0];
    d.joint_limit_hi = lim[1];
  }
  r.finish();
  try {
    d.validate();
  } catch (const std::invalid_argument& e) {
    fail(path, e.what());
  }
  return d;
}

nlohmann::json task_to_json(const TaskSpec& t) {
  return json{{"goal", json::array({t.goal.x(), t.goal.y()})},
              {"bonus", t.bonus},
              {"bonus_threshold", t.bonus_threshold},
              {"horizon", t.horizon}};
}

TaskSpec task_from_json(const nlohmann::json& j, const std::string& path) {
  StrictReader r(j, path);
  TaskSpec t;
  t.goal = point_from_json(r.require("goal"), r.key_path("goal"));
  t.bonus = r.get("bonus", t.bonus);
  t.bonus_threshold = r.get("bonus_threshold", t.bonus_threshold);
  t.horizon = r.get("horizon", t.horizon);
  r.finish();
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    fail(path, e.what());
  }
  return t;
}

nlohmann::json state_to_json(const ChainState& s) {
  return json{{"joint_angles", vector_to_json(s.joint_angles)},
              {"motor_angles", vector_to_json(s.motor_angles)},
              {"ee_position", json::array({s.ee_position.x(), s.ee_position.y()})}};
}

ChainState state_from_json(const nlohmann::json& j, const std::string& path) {
  StrictReader r(j, path);
  ChainState s;
  s.joint_angles =
      vector_from_json(r.require("joint_angles"), r.key_path("joint_angles"));
  s.motor_angles =
      vector_from_json(r.require("motor_angles"), r.key_path("motor_angles"));
  s.ee_position =
      point_from_json(r.require("ee_position"), r.key_path("ee_position"));
  r.finish();
  return s;
}

namespace {

const std::map<std::string, SolveMode>& mode_names() {
  static const std::map<std::string, SolveMode> names{
      {"warm_start_local", SolveMode::warm_start_local},
      {"global", SolveMode::global},
      {"oracle", SolveMode::oracle}};
  return names;
}

std::string mode_to_string(SolveMode m) {
  for (const auto& [name, mode] : mode_names())
    if (mode == m) return name;
  return "global";
}

const std::map<std::string, TrainMode>& train_mode_names() {
  static const std::map<std::string, TrainMode> names{
      {"refab", TrainMode::refab},
      {"pretension_only", TrainMode::pretension_only},
      {"multi_goal", TrainMode::multi_goal},
      {"fixed_design_baseline", TrainMode::fixed_design_baseline}};
  return names;
}

std::string train_mode_to_string(TrainMode m) {
  for (const auto& [name, mode] : train_mode_names())
    if (mode == m) return name;
  return "refab";
}

}  // namespace

nlohmann::json solver_to_json(const SolverConfig& c) {
  return json{{"grid_resolution", c.grid_resolution},
              {"local_max_iters", c.local_max_iters},
              {"constraint_tol", c.constraint_tol},
              {"energy_tol", c.energy_tol},
              {"mode", mode_to_string(c.mode)},
              {"polish_starts", c.polish_starts}};
}

SolverConfig solver_from_json(const nlohmann::json& j, const std::string& path) {
  StrictReader r(j, path);
  SolverConfig c;
  c.grid_resolution = r.get("grid_resolution", c.grid_resolution);
  c.local_max_iters = r.get("local_max_iters", c.local_max_iters);
  c.constraint_tol = r.get("constraint_tol", c.constraint_tol);
  c.energy_tol = r.get("energy_tol", c.energy_tol);
  if (const json* v = r.find("mode")) {
    const std::string name = v->get<std::string>();
    auto it = mode_names().find(name);
    if (it == mode_names().end())
      fail(r.key_path("mode"), "unknown mode '" + name + "'");
    c.mode = it->second;
  }
  c.polish_starts = r.get("polish_starts", c.polish_starts);
  r.finish();
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    fail(path, e.what());
  }
  return c;
}

nlohmann::json train_to_json(const TrainConfig& c) {
  json mask = json::array();
  if (c.trainable_params.flexion_radii) mask.push_back("flexion_radii");
  if (c.trainable_params.pretension) mask.push_back("pretension");
  if (c.trainable_params.link_lengths) mask.push_back("link_lengths");
  return json{{"alpha", c.alpha},
              {"epochs", c.epochs},
              {"rollouts_per_epoch", c.rollouts_per_epoch},
              {"horizon", c.horizon},
              {"extract_every_n_epochs", c.extract_every_n_epochs},
              {"proxy_lr", c.proxy_lr},
              {"policy_lr", c.policy_lr},
              {"buffer_capacity", c.buffer_capacity},
              {"exploration_sigma", c.exploration_sigma},
              {"seed", c.seed},
              {"mode", train_mode_to_string(c.mode)},
              {"trainable_params", mask},
              {"extract_bounds",
               json{{"radius_lo", c.extract_bounds.radius_lo},
                    {"radius_hi", c.extract_bounds.radius_hi},
                    {"pretension_lo", c.extract_bounds.pretension_lo},
                    {"pretension_hi", c.extract_bounds.pretension_hi},
                    {"length_lo", c.extract_bounds.length_lo},
                    {"length_hi", c.extract_bounds.length_hi}}},
              {"proxy_gate", c.proxy_gate},
              {"proxy_steps", c.proxy_steps},
              {"policy_steps", c.policy_steps},
              {"batch_size", c.batch_size},
              {"motor_max", c.motor_max},
              {"eval_episodes", c.eval_episodes},
              {"extract_max_evals", c.extract_max_evals},
              {"extract_sigma", c.extract_sigma},
              {"grad_clip", c.grad_clip},
              {"goal_radius", c.goal_radius},
              {"eval_goals", c.eval_goals},
              {"proxy_hidden", c.proxy_hidden},
              {"policy_hidden", c.policy_hidden}};
}

TrainConfig train_from_json(const nlohmann::json& j, const std::string& path) {
  StrictReader r(j, path);
  TrainConfig c;
  if (const json* v = r.find("mode")) {
    const std::string name = v->get<std::string>();
    auto it = train_mode_names().find(name);
    if (it == train_mode_names().end())
      fail(r.key_path("mode"), "unknown mode '" + name + "'");
    c.mode = it->second;
  }
  c.trainable_params = TrainableMask::for_mode(c.mode);
  if (const json* v = r.find("trainable_params")) {
    if (!v->is_array()) fail(r.key_path("trainable_params"), "expected an array");
    TrainableMask m{false, false, false};
    for (const auto& entry : *v) {
      const std::string name = entry.get<std::string>();
      if (name == "flexion_radii")
        m.flexion_radii = true;
      else if (name == "pretension")
        m.pretension = true;
      else if (name == "link_lengths")
        m.link_lengths = true;
      else
        fail(r.key_path("trainable_params"), "unknown group '" + name + "'");
    }
    c.trainable_params = m;
  }
  if (const json* v = r.find("extract_bounds")) {
    StrictReader b(*v, r.key_path("extract_bounds"));
    c.extract_bounds.radius_lo = b.get("radius_lo", c.extract_bounds.radius_lo);
    c.extract_bounds.radius_hi = b.get("radius_hi", c.extract_bounds.radius_hi);
    c.extract_bounds.pretension_lo =
        b.get("pretension_lo", c.extract_bounds.pretension_lo);
    c.extract_bounds.pretension_hi =
        b.get("pretension_hi", c.extract_bounds.pretension_hi);
    c.extract_bounds.length_lo = b.get("length_lo", c.extract_bounds.length_lo);
    c.extract_bounds.length_hi = b.get("length_hi", c.extract_bounds.length_hi);
    b.finish();
  }
  c.alpha = r.get("alpha", c.alpha);
  c.epochs = r.get("epochs", c.epochs);
  c.rollouts_per_epoch = r.get("rollouts_per_epoch", c.rollouts_per_epoch);
  c.horizon = r.get("horizon", c.horizon);
  c.extract_every_n_epochs =
      r.get("extract_every_n_epochs", c.extract_every_n_epochs);
  c.proxy_lr = r.get("proxy_lr", c.proxy_lr);
  c.policy_lr = r.get("policy_lr", c.policy_lr);
  c.buffer_capacity = r.get("buffer_capacity", c.buffer_capacity);
  c.exploration_sigma = r.get("exploration_sigma", c.exploration_sigma);
  c.seed = r.get("seed", c.seed);
  c.proxy_gate = r.get("proxy_gate", c.proxy_gate);
  c.proxy_steps = r.get("proxy_steps", c.proxy_steps);
  c.policy_steps = r.get("policy_steps", c.policy_steps);
  c.batch_size = r.get("batch_size", c.batch_size);
  c.motor_max = r.get("motor_max", c.motor_max);
  c.eval_episodes = r.get("eval_episodes", c.eval_episodes);
  c.extract_max_evals = r.get("extract_max_evals", c.extract_max_evals);
  c.extract_sigma = r.get("extract_sigma", c.extract_sigma);
  c.grad_clip = r.get("grad_clip", c.grad_clip);
  c.goal_radius = r.get("goal_radius", c.goal_radius);
  c.eval_goals = r.get("eval_goals", c.eval_goals);
  c.proxy_hidden = r.get("proxy_hidden", c.proxy_hidden);
  c.policy_hidden = r.get("policy_hidden", c.policy_hidden);
  r.finish();
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    fail(path, e.what());
  }
  return c;
}

nlohmann::json network_to_json(const Network& net) {
  std::vector<double> params;
  params.reserve(net.num_params());
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    for (Eigen::Index r = 0; r < net.weights[l].rows(); ++r)
      for (Eigen::Index c = 0; c < net.weights[l].cols(); ++c)
        params.push_back(net.weights[l](r, c));
    for (Eigen::Index i = 0; i < net.biases[l].size(); ++i)
      params.push_back(net.biases[l][i]);
  }
  return json{{"layer_sizes", net.layer_sizes},
              {"activation", net.activation == Activation::tanh_fn ? "tanh" : "relu"},
              {"params", params},
              {"seed", net.seed}};
}

Network network_from_json(const nlohmann::json& j, const std::string& path) {
  StrictReader r(j, path);
  const std::vector<int> sizes = r.require("layer_sizes").get<std::vector<int>>();
  const std::string act = r.get<std::string>("activation", "tanh");
  if (act != "tanh" && act != "relu")
    fail(r.key_path("activation"), "unknown activation '" + act + "'");
  const std::vector<double> params =
      r.require("params").get<std::vector<double>>();
  const std::uint64_t seed = r.get<std::uint64_t>("seed", 0);
  r.finish();

  Network net = Network::xavier(
      sizes, act == "tanh" ? Activation::tanh_fn : Activation::relu, seed);
  if (params.size() != net.num_params())
    fail(path, "params length does not match layer_sizes");
  std::size_t at = 0;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    for (Eigen::Index rr = 0; rr < net.weights[l].rows(); ++rr)
      for (Eigen::Index cc = 0; cc < net.weights[l].cols(); ++cc)
        net.weights[l](rr, cc) = params[at++];
    for (Eigen::Index i = 0; i < net.biases[l].size(); ++i)
      net.biases[l][i] = params[at++];
  }
  return net;
}

nlohmann::json transition_to_json(const Transition& t) {
  return json{{"state", state_to_json(t.state)},
              {"action", vector_to_json(t.action)},
              {"next_state", state_to_json(t.next_state)},
              {"reward", t.reward},
              {"goal", json::array({t.goal.x(), t.goal.y()})},
              {"infeasible_flag", t.infeasible_flag},
              {"design_version", t.design_version}};
}

Transition transition_from_json(const nlohmann::json& j, const std::string& path) {
  StrictReader r(j, path);
  Transition t;
  t.state = state_from_json(r.require("state"), r.key_path("state"));
  t.action = vector_from_json(r.require("action"), r.key_path("action"));
  t.next_state =
      state_from_json(r.require("next_state"), r.key_path("next_state"));
  t.reward = r.get("reward", 0.0);
  if (const json* v = r.find("goal"))
    t.goal = point_from_json(*v, r.key_path("goal"));
  t.infeasible_flag = r.get("infeasible_flag", false);
  t.design_version = r.get("design_version", 0);
  r.finish();
  return t;
}

std::string transitions_to_jsonl(const std::vector<Transition>& transitions) {
  std::ostringstream os;
  for (const auto& t : transitions) os << transition_to_json(t).dump() << "\n";
  return os.str();
}

std::vector<Transition> transitions_from_jsonl(const std::string& text) {
  std::vector<Transition> out;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw std::invalid_argument("transitions line " + std::to_string(lineno) +
                                  ": " + e.what());
    }
    out.push_back(
        transition_from_json(j, "transitions[" + std::to_string(lineno) + "]"));
  }
  return out;
}

nlohmann::json eval_to_json(const EvalResult& r) {
  json episodes = json::array();
  for (const auto& e : r.episodes) {
    episodes.push_back(json{{"goal", json::array({e.goal.x(), e.goal.y()})},
                            {"final_ee", json::array({e.final_ee.x(), e.final_ee.y()})},
                            {"final_distance", e.final_distance},
                            {"episode_return", e.episode_return},
                            {"infeasible_count", e.infeasible_count}});
  }
  return json{{"mean_distance", r.mean_distance},
              {"std_distance", r.std_distance},
              {"mean_return", r.mean_return},
              {"infeasible_events", r.infeasible_events},
              {"episodes", episodes}};
}

nlohmann::json epoch_record_to_json(const EpochRecord& r) {
  return json{{"epoch", r.epoch},
              {"mean_return", r.mean_return},
              {"estimated_return", r.estimated_return},
              {"proxy_loss", r.proxy_train_mse},
              {"proxy_holdout_loss", r.proxy_holdout_mse},
              {"policy_updated", r.policy_updated},
              {"extracted", r.extracted},
              {"infeasible_count", r.infeasible_count},
              {"phi", design_to_json(r.design)}};
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  StrictReader r(j, "config");
  ExperimentConfig c;
  c.seed = r.get<std::uint64_t>("seed", 0);
  c.output_dir = r.get<std::string>("output_dir", c.output_dir);
  if (const json* v = r.find("design"))
    c.design = design_from_json(*v, "config.design");

  const json* tasks = r.find("tasks");
  const json* goal = r.find("goal");
  if (tasks && goal)
    fail("config", "give either 'tasks' or the 'goal' shorthand, not both");
  if (tasks) {
    if (!tasks->is_array() || tasks->empty())
      fail("config.tasks", "expected a non-empty array");
    c.tasks.clear();
    for (std::size_t i = 0; i < tasks->size(); ++i)
      c.tasks.push_back(task_from_json(
          (*tasks)[i], "config.tasks[" + std::to_string(i) + "]"));
  } else if (goal) {
    TaskSpec t;
    t.goal = point_from_json(*goal, "config.goal");
    t.validate();
    c.tasks = {t};
  } else {
    TaskSpec t;
    t.goal = Eigen::Vector2d(0.13, 0.3);
    c.tasks = {t};
  }

  if (const json* v = r.find("solver"))
    c.solver = solver_from_json(*v, "config.solver");
  if (const json* v = r.find("train")) {
    // default the training seed to the experiment seed
    json patched = *v;
    if (!patched.contains("seed")) patched["seed"] = c.seed;
    c.train = train_from_json(patched, "config.train");
  } else {
    c.train.seed = c.seed;
  }
  r.finish();
  return c;
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
  json tasks = json::array();
  for (const auto& t : c.tasks) tasks.push_back(task_to_json(t));
  return json{{"seed", c.seed},
              {"output_dir", c.output_dir},
              {"design", design_to_json(c.design)},
              {"tasks", tasks},
              {"solver", solver_to_json(c.solver)},
              {"train", train_to_json(c.train)}};
}

ExperimentConfig parse_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::invalid_argument("config file not found: " + file.string());
  json j;
  try {
    j = json::parse(in, nullptr, /*allow_exceptions=*/true,
                    /*ignore_comments=*/false);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config " + file.string() + ": " + e.what());
  }
  return config_from_json(j);
}

std::string read_text_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open file: " + file.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file(const std::filesystem::path& file, const std::string& text) {
  if (file.has_parent_path())
    std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + file.string());
  out << text;
}

}  // namespace tendonopt
