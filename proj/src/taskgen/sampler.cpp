#include <cstring>
#include <fstream>

#include "aenp/config_error.hpp"
#include "aenp/taskgen.hpp"
#include "aenp/tensor.hpp"

namespace aenp {

void TaskSamplerConfig::validate() const {
  std::vector<std::string> bad;
  if (n_context_min < 0 || n_context_max < n_context_min) {
    bad.push_back("sampler.n_context_min");
    bad.push_back("sampler.n_context_max");
  }
  if (n_target < 1) bad.push_back("sampler.n_target");
  if (!(context_span > 0.0)) bad.push_back("sampler.context_span");
  if (!(target_margin >= 0.0)) bad.push_back("sampler.target_margin");
  if (!(id_center_range.first <= id_center_range.second)) bad.push_back("sampler.id_center_range");
  if (!(ood_center_range.first <= ood_center_range.second)) bad.push_back("sampler.ood_center_range");
  if (!bad.empty()) throw ConfigError("invalid task sampler configuration", bad);
}

void to_json(nlohmann::json& j, const TaskSamplerConfig& c) {
  j = {{"n_context_min", c.n_context_min},
       {"n_context_max", c.n_context_max},
       {"n_target", c.n_target},
       {"context_span", c.context_span},
       {"target_margin", c.target_margin},
       {"id_center_range", {c.id_center_range.first, c.id_center_range.second}},
       {"ood_center_range", {c.ood_center_range.first, c.ood_center_range.second}}};
}

void from_json(const nlohmann::json& j, TaskSamplerConfig& c) {
  const std::string p = "sampler";
  reject_unknown_keys(j,
                      {"n_context_min", "n_context_max", "n_target", "context_span",
                       "target_margin", "id_center_range", "ood_center_range"},
                      p);
  read_optional(j, "n_context_min", c.n_context_min, p);
  read_optional(j, "n_context_max", c.n_context_max, p);
  read_optional(j, "n_target", c.n_target, p);
  read_optional(j, "context_span", c.context_span, p);
  read_optional(j, "target_margin", c.target_margin, p);
  read_optional(j, "id_center_range", c.id_center_range, p);
  read_optional(j, "ood_center_range", c.ood_center_range, p);
  c.validate();
}

std::string to_string(TaskMode mode) { return mode == TaskMode::id ? "ID" : "OOD"; }

TaskMode task_mode_from_string(const std::string& s) {
  if (s == "ID" || s == "id") return TaskMode::id;
  if (s == "OOD" || s == "ood") return TaskMode::ood;
  throw ConfigError("unknown task mode '" + s + "'", {"mode"});
}

Task sample_task(std::uint64_t seed, Stream stream, std::uint64_t index, TaskMode mode,
                 const TaskSamplerConfig& sampler, const GibbsProcessConfig& proc) {
  Rng rng(seed, stream, index);
  Task task;
  task.mode = mode;
  task.seed = mix64(seed ^ mix64(static_cast<std::uint64_t>(stream) << 48 ^ index));
  const auto [lo, hi] = mode == TaskMode::id ? sampler.id_center_range : sampler.ood_center_range;
  const double centre = rng.uniform(lo, hi);
  task.context_lo = centre - 0.5 * sampler.context_span;
  task.context_hi = centre + 0.5 * sampler.context_span;
  task.beta = rng.bernoulli(proc.orientation_prob) ? 1 : 0;
  const auto nc = static_cast<std::size_t>(rng.uniform_int(sampler.n_context_min, sampler.n_context_max));
  const auto nt = static_cast<std::size_t>(sampler.n_target);
  task.x_context.resize(nc);
  task.x_target.resize(nt);
  for (auto& x : task.x_context) x = rng.uniform(task.context_lo, task.context_hi);
  const double tlo = task.target_lo(sampler.target_margin), thi = task.target_hi(sampler.target_margin);
  for (auto& x : task.x_target) x = rng.uniform(tlo, thi);

  std::vector<double> xs = task.x_context;
  xs.insert(xs.end(), task.x_target.begin(), task.x_target.end());
  std::vector<double> f;
  try {
    f = sample_gp(xs, task.beta, proc, rng);
  } catch (const NumericalError& e) {
    throw NumericalError(std::string(e.what()) + " (task seed " + hex64(task.seed) + ")");
  }
  task.y_context.resize(nc);
  task.y_target.resize(nt);
  for (std::size_t i = 0; i < nc; ++i) task.y_context[i] = f[i] + proc.noise_std * rng.normal();
  for (std::size_t i = 0; i < nt; ++i) task.y_target[i] = f[nc + i] + proc.noise_std * rng.normal();
  return task;
}

std::string task_config_hash(const TaskSamplerConfig& sampler, const GibbsProcessConfig& proc) {
  const nlohmann::json j = {{"sampler", sampler}, {"process", proc}};
  return hex64(fnv1a64(j.dump()));
}

namespace {

nlohmann::json task_to_json(const Task& t) {
  return {{"x_context", t.x_context}, {"y_context", t.y_context}, {"x_target", t.x_target},
          {"y_target", t.y_target},   {"beta", t.beta},           {"mode", to_string(t.mode)},
          {"seed", t.seed},           {"context_lo", t.context_lo}, {"context_hi", t.context_hi}};
}

Task task_from_json(const nlohmann::json& j) {
  Task t;
  j.at("x_context").get_to(t.x_context);
  j.at("y_context").get_to(t.y_context);
  j.at("x_target").get_to(t.x_target);
  j.at("y_target").get_to(t.y_target);
  j.at("beta").get_to(t.beta);
  t.mode = task_mode_from_string(j.at("mode").get<std::string>());
  j.at("seed").get_to(t.seed);
  j.at("context_lo").get_to(t.context_lo);
  j.at("context_hi").get_to(t.context_hi);
  return t;
}

constexpr char kTaskMagic[8] = {'A', 'E', 'N', 'P', 'T', 'S', 'K', '1'};

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <typename T>
void put_column(std::ofstream& out, const std::vector<T>& v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}
template <typename T>
T take(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw std::runtime_error("task file truncated");
  return v;
}
template <typename T>
std::vector<T> take_column(std::ifstream& in, std::size_t n) {
  std::vector<T> v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
  if (!in) throw std::runtime_error("task file truncated");
  return v;
}

}  // namespace

void write_tasks_jsonl(const std::filesystem::path& path, const std::vector<Task>& tasks,
                       const std::string& config_hash) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << nlohmann::json{{"config_hash", config_hash}, {"count", tasks.size()}}.dump() << "\n";
  for (const auto& t : tasks) out << task_to_json(t).dump() << "\n";
}

std::vector<Task> read_tasks_jsonl(const std::filesystem::path& path, std::string* config_hash) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty task file " + path.string());
  const auto header = nlohmann::json::parse(line);
  if (config_hash) *config_hash = header.at("config_hash").get<std::string>();
  std::vector<Task> tasks;
  while (std::getline(in, line)) {
    if (!line.empty()) tasks.push_back(task_from_json(nlohmann::json::parse(line)));
  }
  if (tasks.size() != header.at("count").get<std::size_t>()) {
    throw std::runtime_error("task file " + path.string() + " has a wrong task count");
  }
  return tasks;
}

void write_tasks_binary(const std::filesystem::path& path, const std::vector<Task>& tasks,
                        const std::string& config_hash) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kTaskMagic, sizeof kTaskMagic);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(config_hash.size()));
  out.write(config_hash.data(), static_cast<std::streamsize>(config_hash.size()));
  put<std::uint64_t>(out, tasks.size());
  std::vector<std::uint64_t> seeds;
  std::vector<std::uint8_t> betas, modes;
  std::vector<std::uint32_t> nc, nt;
  std::vector<double> lo, hi, xc, yc, xt, yt;
  for (const auto& t : tasks) {
    seeds.push_back(t.seed);
    betas.push_back(static_cast<std::uint8_t>(t.beta));
    modes.push_back(t.mode == TaskMode::id ? 0 : 1);
    nc.push_back(static_cast<std::uint32_t>(t.x_context.size()));
    nt.push_back(static_cast<std::uint32_t>(t.x_target.size()));
    lo.push_back(t.context_lo);
    hi.push_back(t.context_hi);
    xc.insert(xc.end(), t.x_context.begin(), t.x_context.end());
    yc.insert(yc.end(), t.y_context.begin(), t.y_context.end());
    xt.insert(xt.end(), t.x_target.begin(), t.x_target.end());
    yt.insert(yt.end(), t.y_target.begin(), t.y_target.end());
  }
  put_column(out, seeds);
  put_column(out, betas);
  put_column(out, modes);
  put_column(out, nc);
  put_column(out, nt);
  put_column(out, lo);
  put_column(out, hi);
  put_column(out, xc);
  put_column(out, yc);
  put_column(out, xt);
  put_column(out, yt);
}

std::vector<Task> read_tasks_binary(const std::filesystem::path& path, std::string* config_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kTaskMagic, sizeof magic) != 0) {
    throw std::runtime_error("not a task file: " + path.string());
  }
  std::string hash(take<std::uint32_t>(in), '\0');
  in.read(hash.data(), static_cast<std::streamsize>(hash.size()));
  if (config_hash) *config_hash = hash;
  const auto n = static_cast<std::size_t>(take<std::uint64_t>(in));
  const auto seeds = take_column<std::uint64_t>(in, n);
  const auto betas = take_column<std::uint8_t>(in, n);
  const auto modes = take_column<std::uint8_t>(in, n);
  const auto nc = take_column<std::uint32_t>(in, n);
  const auto nt = take_column<std::uint32_t>(in, n);
  const auto lo = take_column<double>(in, n);
  const auto hi = take_column<double>(in, n);
  std::size_t total_c = 0, total_t = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total_c += nc[i];
    total_t += nt[i];
  }
  const auto xc = take_column<double>(in, total_c);
  const auto yc = take_column<double>(in, total_c);
  const auto xt = take_column<double>(in, total_t);
  const auto yt = take_column<double>(in, total_t);
  std::vector<Task> tasks(n);
  std::size_t oc = 0, ot = 0;
  for (std::size_t i = 0; i < n; ++i) {
    Task& t = tasks[i];
    t.seed = seeds[i];
    t.beta = betas[i];
    t.mode = modes[i] == 0 ? TaskMode::id : TaskMode::ood;
    t.context_lo = lo[i];
    t.context_hi = hi[i];
    t.x_context.assign(xc.begin() + oc, xc.begin() + oc + nc[i]);
    t.y_context.assign(yc.begin() + oc, yc.begin() + oc + nc[i]);
    t.x_target.assign(xt.begin() + ot, xt.begin() + ot + nt[i]);
    t.y_target.assign(yt.begin() + ot, yt.begin() + ot + nt[i]);
    oc += nc[i];
    ot += nt[i];
  }
  return tasks;
}

}  // namespace aenp
