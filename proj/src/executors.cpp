// SPDX-License-Identifier: Apache-2.0
#include "screenflow/executors.hpp"

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "screenflow/naming.hpp"

extern char** environ;

namespace screenflow {

// ---- shared protocol helpers -------------------------------------------

double phase_value(const PhaseTiming& p, std::string_view name) {
  if (name == "setup_cuda") return p.setup_cuda;
  if (name == "setup_rest") return p.setup_rest;
  if (name == "docking") return p.docking;
  if (name == "shutdown") return p.shutdown;
  throw Error("unknown phase '" + std::string(name) + "'");
}

namespace {

std::string format_ms(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::optional<double> parse_ms_value(std::string_view s) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !(v >= 0) || !std::isfinite(v)) return std::nullopt;
  return v;
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    fn(line);
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string format_phases_line(const PhaseTiming& p) {
  return "PHASES " + format_ms(p.setup_cuda) + " " + format_ms(p.setup_rest) + " " + format_ms(p.docking) +
         " " + format_ms(p.shutdown);
}

std::optional<PhaseTiming> parse_phases(std::string_view output) {
  std::optional<PhaseTiming> found;
  for_each_line(output, [&](std::string_view line) {
    if (line.substr(0, 7) != "PHASES ") return;
    std::istringstream in{std::string(line.substr(7))};
    std::string a, b, c, d, extra;
    if (!(in >> a >> b >> c >> d) || (in >> extra)) return;
    auto va = parse_ms_value(a), vb = parse_ms_value(b), vc = parse_ms_value(c), vd = parse_ms_value(d);
    if (va && vb && vc && vd) found = PhaseTiming{*va, *vb, *vc, *vd};
  });
  return found;
}

std::optional<CommValue> parse_result_line(std::string_view output) {
  std::optional<CommValue> found;
  for_each_line(output, [&](std::string_view line) {
    if (line.substr(0, 7) != "RESULT ") return;
    auto rest = line.substr(7);
    auto sp = rest.find(' ');
    auto type = rest.substr(0, sp);
    auto body = sp == std::string_view::npos ? std::string_view{} : rest.substr(sp + 1);
    try {
      found = CommValue::decode(type, body);
    } catch (const Error&) {
    }
  });
  return found;
}

// ---- randomness and sampling -------------------------------------------

std::string substream_name(const std::string& task_id, std::optional<int> map_index) {
  return task_id + "#" + (map_index ? std::to_string(*map_index) : std::string("-"));
}

Xoshiro256 derive_substream(std::uint64_t run_seed, const std::string& task_id,
                            std::optional<int> map_index) {
  return Xoshiro256(run_seed ^ fnv1a64(substream_name(task_id, map_index)));
}

std::int64_t sample_duration(const DurationSpec& spec, Xoshiro256& rng) {
  std::int64_t base =
      spec.kind == DurationSpec::Kind::fixed ? spec.lo_ms : rng.uniform_int(spec.lo_ms, spec.hi_ms);
  if (spec.weight == 1.0) return base;
  return static_cast<std::int64_t>(std::llround(static_cast<double>(base) * spec.weight));
}

PhaseTiming simulated_phases(std::int64_t d) {
  const std::int64_t cuda = d * 8 / 100;
  const std::int64_t rest = d * 5 / 100;
  const std::int64_t shutdown = d * 2 / 100;
  return PhaseTiming{static_cast<double>(cuda), static_cast<double>(rest),
                     static_cast<double>(d - cuda - rest - shutdown), static_cast<double>(shutdown)};
}

CommValue evaluate_returns(const std::string& resolved) {
  auto colon = resolved.find(':');
  if (colon == std::string::npos) throw Error("returns value needs a type prefix: " + resolved);
  auto type = resolved.substr(0, colon);
  auto body = resolved.substr(colon + 1);
  if (type == "str") return CommValue::of_text(body);
  if (type == "int") {
    auto v = parse_int(body);
    if (!v) throw Error("returns int: not an integer: '" + body + "'");
    return CommValue::of_int(*v);
  }
  if (type == "list") {
    TextList items;
    if (!body.empty()) {
      std::size_t pos = 0;
      while (true) {
        auto comma = body.find(',', pos);
        items.push_back(body.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
        if (comma == std::string::npos) break;
        pos = comma + 1;
      }
    }
    return CommValue::of_list(std::move(items));
  }
  if (type == "labels") {
    auto v = parse_int(body);
    if (!v || *v < 0) throw Error("returns labels: not a count: '" + body + "'");
    return CommValue::of_list(batch_labels(static_cast<int>(*v)));
  }
  throw Error("unknown returns type '" + type + "'");
}

std::filesystem::path instance_log_path(const std::filesystem::path& run_dir, const InstanceKey& key) {
  std::string name = key.task_id;
  if (key.map_index) name += "." + std::to_string(*key.map_index);
  return run_dir / "logs" / (name + ".log");
}

Completion run_builtin(const BuiltinRegistry* registry, const Launch& launch, StepContext ctx) {
  Completion c;
  c.key = launch.key;
  const std::string& step = launch.task->action.step;
  if (!registry || !registry->count(step)) {
    c.ok = false;
    c.exit_code = -1;
    c.diagnostic = "unknown builtin step " + step;
    return c;
  }
  try {
    StepResult r = registry->at(step)(ctx);
    c.ok = r.ok;
    c.exit_code = r.ok ? 0 : 1;
    c.output = std::move(r.output);
    c.diagnostic = std::move(r.diagnostic);
    c.value = std::move(r.value);
  } catch (const std::exception& e) {
    c.ok = false;
    c.exit_code = 1;
    c.diagnostic = e.what();
  }
  c.phases = parse_phases(c.output);
  return c;
}

namespace {

// Outcome of a sim action, shared by both executors.
Completion simulate_action(const Launch& l, std::uint64_t seed, std::int64_t& duration_ms) {
  Completion c;
  c.key = l.key;
  const auto& d = l.task->action.duration;
  auto rng = derive_substream(seed, l.key.task_id, l.key.map_index);
  duration_ms = sample_duration(d, rng);
  c.phases = simulated_phases(duration_ms);
  c.output = format_phases_line(*c.phases) + "\n";
  if (d.fails(l.key.map_index)) {
    c.ok = false;
    c.exit_code = 1;
    c.diagnostic = "forced failure";
    return c;
  }
  c.ok = true;
  if (!l.returns.empty()) {
    try {
      c.value = evaluate_returns(l.returns);
      c.output += "RESULT " + std::string(c.value->type_name()) + " " + c.value->encode() + "\n";
    } catch (const Error& e) {
      c.ok = false;
      c.exit_code = 1;
      c.diagnostic = e.what();
    }
  }
  return c;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

// Environment for a shell task: the parent environment with the SF_*
// variables replaced.
std::vector<std::string> task_environment(const InstanceKey& key, const std::filesystem::path& run_dir) {
  std::vector<std::string> env;
  for (char** e = environ; e && *e; ++e) {
    std::string_view entry(*e);
    if (entry.rfind("SF_RUN_DIR=", 0) == 0 || entry.rfind("SF_TASK_ID=", 0) == 0 ||
        entry.rfind("SF_MAP_INDEX=", 0) == 0)
      continue;
    env.emplace_back(entry);
  }
  env.push_back("SF_RUN_DIR=" + std::filesystem::absolute(run_dir).string());
  env.push_back("SF_TASK_ID=" + key.task_id);
  env.push_back("SF_MAP_INDEX=" + (key.map_index ? std::to_string(*key.map_index) : std::string("-")));
  return env;
}

}  // namespace

Completion exec_shell(const InstanceKey& key, const std::string& command, const ShellOptions& options) {
  Completion c;
  c.key = key;
  const auto log_path = instance_log_path(options.run_dir, key);
  std::error_code ec;
  std::filesystem::create_directories(log_path.parent_path(), ec);

  int log_fd = ::open(log_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (log_fd < 0) {
    c.ok = false;
    c.exit_code = -1;
    c.diagnostic = "cannot open log " + log_path.string() + ": " + std::strerror(errno);
    return c;
  }

  auto env = task_environment(key, options.run_dir);
  std::vector<char*> envp;
  for (auto& e : env) envp.push_back(e.data());
  envp.push_back(nullptr);
  std::string sh = "/bin/sh", dash_c = "-c", cmd = command;
  char* argv[] = {sh.data(), dash_c.data(), cmd.data(), nullptr};

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addopen(&actions, STDIN_FILENO, "/dev/null", O_RDONLY, 0);
  posix_spawn_file_actions_adddup2(&actions, log_fd, STDOUT_FILENO);
  posix_spawn_file_actions_adddup2(&actions, log_fd, STDERR_FILENO);
  posix_spawn_file_actions_addchdir_np(&actions, options.data_dir.c_str());
  posix_spawnattr_t attr;
  posix_spawnattr_init(&attr);
  posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP);
  posix_spawnattr_setpgroup(&attr, 0);

  pid_t pid = -1;
  int rc = posix_spawn(&pid, sh.c_str(), &actions, &attr, argv, envp.data());
  posix_spawn_file_actions_destroy(&actions);
  posix_spawnattr_destroy(&attr);
  ::close(log_fd);
  if (rc != 0) {
    c.ok = false;
    c.exit_code = -1;
    c.diagnostic = "spawn failed: " + std::string(std::strerror(rc));
    return c;
  }

  int status = 0;
  bool timed_out = false;
  if (options.timeout_ms) {
    auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(*options.timeout_ms);
    while (true) {
      pid_t w = ::waitpid(pid, &status, WNOHANG);
      if (w == pid) break;
      if (std::chrono::steady_clock::now() >= deadline) {
        ::kill(-pid, SIGKILL);
        ::waitpid(pid, &status, 0);
        timed_out = true;
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
  } else {
    while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
    }
  }

  c.output = read_file(log_path);
  c.phases = parse_phases(c.output);
  c.value = parse_result_line(c.output);
  if (timed_out) {
    c.ok = false;
    c.exit_code = -1;
    c.diagnostic = "timed out after " + std::to_string(*options.timeout_ms) + " ms";
  } else if (WIFEXITED(status)) {
    c.exit_code = WEXITSTATUS(status);
    c.ok = c.exit_code == 0;
    if (!c.ok) c.diagnostic = "exit code " + std::to_string(c.exit_code);
  } else if (WIFSIGNALED(status)) {
    c.exit_code = 128 + WTERMSIG(status);
    c.ok = false;
    c.diagnostic = "killed by signal " + std::to_string(WTERMSIG(status));
  }
  return c;
}

CommandResult run_command(const std::string& command, const std::filesystem::path& cwd) {
  std::string quoted = "'";
  for (char ch : std::filesystem::absolute(cwd).string()) {
    if (ch == '\'') quoted += "'\\''";
    else quoted += ch;
  }
  quoted += "'";
  // Redirect with exec rather than a redirected { } group: dash drops
  // redirections of subshells nested in such a group.
  std::string full = "cd " + quoted + " || exit 125\nexec 2>&1 </dev/null\n" + command;
  CommandResult r;
  FILE* pipe = ::popen(full.c_str(), "r");
  if (!pipe) {
    r.exit_code = -1;
    r.output = std::strerror(errno);
    return r;
  }
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
  int status = ::pclose(pipe);
  if (WIFEXITED(status)) r.exit_code = WEXITSTATUS(status);
  else r.exit_code = 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
  return r;
}

// ---- SimExecutor --------------------------------------------------------

SimExecutor::SimExecutor(SimClock& clock, Options options) : clock_(clock), options_(std::move(options)) {}

void SimExecutor::write_log(const InstanceKey& key, const std::string& output) const {
  if (options_.run_dir) write_text(instance_log_path(*options_.run_dir, key), output);
}

void SimExecutor::start(const Launch& l) {
  std::int64_t duration = 0;
  Completion c;
  switch (l.task->action.kind) {
    case ActionSpec::Kind::sim:
      c = simulate_action(l, options_.seed, duration);
      break;
    case ActionSpec::Kind::builtin: {
      StepContext ctx{l.key, l.params, l.scope, options_.data_dir, options_.run_dir.value_or(""), true};
      c = run_builtin(options_.builtins, l, std::move(ctx));
      break;
    }
    case ActionSpec::Kind::shell:
      c.key = l.key;
      c.ok = false;
      c.exit_code = -1;
      c.diagnostic = "shell actions need the process executor";
      break;
  }
  write_log(l.key, c.output);
  pending_.push_back(Pending{clock_.now_ms() + duration, seq_++, std::move(c)});
}

std::vector<Completion> SimExecutor::wait() {
  if (pending_.empty()) throw Error("SimExecutor::wait with nothing running");
  auto next = std::min_element(pending_.begin(), pending_.end(),
                               [](const Pending& a, const Pending& b) { return a.finish_ms < b.finish_ms; });
  const std::int64_t t = next->finish_ms;
  clock_.advance_to(t);
  std::vector<Completion> out;
  auto split = std::stable_partition(pending_.begin(), pending_.end(),
                                     [t](const Pending& p) { return p.finish_ms != t; });
  for (auto it = split; it != pending_.end(); ++it) out.push_back(std::move(it->completion));
  pending_.erase(split, pending_.end());
  return out;
}

// ---- ProcessExecutor ----------------------------------------------------

ProcessExecutor::ProcessExecutor(Options options) : options_(std::move(options)) {}

ProcessExecutor::~ProcessExecutor() {
  for (auto& [key, t] : workers_)
    if (t.joinable()) t.join();
}

Completion ProcessExecutor::execute(const Launch& l) const {
  switch (l.task->action.kind) {
    case ActionSpec::Kind::shell:
      return exec_shell(l.key, l.command, ShellOptions{options_.data_dir, options_.run_dir, options_.timeout_ms});
    case ActionSpec::Kind::builtin: {
      StepContext ctx{l.key, l.params, l.scope, options_.data_dir, options_.run_dir, false};
      Completion c = run_builtin(options_.builtins, l, std::move(ctx));
      std::string log = c.output;
      if (!c.diagnostic.empty()) log += "error: " + c.diagnostic + "\n";
      write_text(instance_log_path(options_.run_dir, l.key), log);
      return c;
    }
    case ActionSpec::Kind::sim: {
      std::int64_t duration = 0;
      Completion c = simulate_action(l, options_.seed, duration);
      std::this_thread::sleep_for(std::chrono::milliseconds(duration));
      write_text(instance_log_path(options_.run_dir, l.key), c.output);
      return c;
    }
  }
  return {};
}

void ProcessExecutor::start(const Launch& launch) {
  std::lock_guard lock(mutex_);
  workers_[launch.key] = std::thread([this, launch] {
    Completion c = execute(launch);
    {
      std::lock_guard inner(mutex_);
      done_.push_back(std::move(c));
    }
    cv_.notify_all();
  });
}

std::vector<Completion> ProcessExecutor::wait() {
  std::vector<Completion> out;
  {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [this] { return !done_.empty(); });
    out.swap(done_);
  }
  for (const auto& c : out) {
    std::thread worker;
    {
      std::lock_guard lock(mutex_);
      auto it = workers_.find(c.key);
      if (it == workers_.end()) continue;
      worker = std::move(it->second);
      workers_.erase(it);
    }
    if (worker.joinable()) worker.join();
  }
  return out;
}

}  // namespace screenflow
