// SPDX-License-Identifier: Apache-2.0
#include "screenflow/workflow_file.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <set>
#include <fstream>
#include <map>
#include <sstream>

namespace screenflow {

namespace {

struct Token {
  std::string text;
  bool quoted = false;
};

// Splits on unquoted whitespace; strips quotes; stops at an unquoted `#`.
std::vector<Token> tokenize(std::string_view line, std::size_t lineno) {
  std::vector<Token> out;
  Token cur;
  bool in_token = false;
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (in_quotes) {
      if (c == '\\' && i + 1 < line.size() && (line[i + 1] == '"' || line[i + 1] == '\\')) {
        cur.text += line[++i];
      } else if (c == '"') {
        in_quotes = false;
      } else {
        cur.text += c;
      }
      continue;
    }
    if (c == '#') break;
    if (c == ' ' || c == '\t' || c == '\r') {
      if (in_token) out.push_back(std::move(cur));
      cur = Token{};
      in_token = false;
      continue;
    }
    in_token = true;
    if (c == '"') {
      in_quotes = true;
      cur.quoted = true;
    } else {
      cur.text += c;
    }
  }
  if (in_quotes) throw ParseError(lineno, "unterminated quote");
  if (in_token) out.push_back(std::move(cur));
  return out;
}

int parse_count(const std::string& s, std::size_t lineno, const std::string& what) {
  auto v = parse_int(s);
  if (!v || *v < std::numeric_limits<int>::min() || *v > std::numeric_limits<int>::max())
    throw ParseError(lineno, "invalid " + what + " '" + s + "'");
  return static_cast<int>(*v);
}

std::int64_t parse_ms(std::string_view s) {
  auto v = parse_int(s);
  if (!v || *v < 0) throw Error("invalid duration '" + std::string(s) + "'");
  return *v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    auto next = s.find(sep, pos);
    out.push_back(s.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

bool needs_quotes(const std::string& s) {
  if (s.empty()) return true;
  for (char c : s)
    if (c == ' ' || c == '\t' || c == '"' || c == '\\' || c == '#' || c == '\r') return true;
  return false;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

std::string maybe_quote(const std::string& s) { return needs_quotes(s) ? quote(s) : s; }

const std::set<std::string> kReturnTypes = {"int", "str", "list", "labels"};

ActionSpec parse_action(const std::string& value, std::size_t lineno) {
  auto colon = value.find(':');
  if (colon == std::string::npos) throw ParseError(lineno, "action needs a kind prefix: '" + value + "'");
  std::string kind = value.substr(0, colon);
  std::string body = value.substr(colon + 1);
  if (kind == "shell") {
    if (body.empty()) throw ParseError(lineno, "empty shell command");
    return ActionSpec::shell(body);
  }
  if (kind == "builtin") {
    if (body.empty()) throw ParseError(lineno, "empty builtin step name");
    return ActionSpec::builtin(body);
  }
  if (kind == "sim") {
    try {
      return ActionSpec::sim(parse_duration(body));
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(lineno, e.what());
    }
  }
  throw ParseError(lineno, "unknown action kind '" + kind + "'");
}

}  // namespace

DurationSpec parse_duration(std::string_view text) {
  DurationSpec d;
  std::string_view body = text;
  if (auto bang = body.find('!'); bang != std::string_view::npos) {
    std::string_view fail = body.substr(bang + 1);
    body = body.substr(0, bang);
    if (fail == "fail") {
      d.fail_all = true;
    } else if (fail.rfind("fail=", 0) == 0) {
      for (auto idx : split(fail.substr(5), ',')) {
        auto v = parse_int(idx);
        if (!v || *v < 0) throw Error("invalid failure index '" + std::string(idx) + "'");
        d.fail_indices.insert(static_cast<int>(*v));
      }
    } else {
      throw Error("invalid failure marker '!" + std::string(fail) + "'");
    }
  }
  if (auto star = body.find('*'); star != std::string_view::npos) {
    std::string_view w = body.substr(star + 1);
    body = body.substr(0, star);
    double weight = 0;
    auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), weight);
    if (ec != std::errc{} || ptr != w.data() + w.size() || !(weight > 0) || !std::isfinite(weight))
      throw Error("invalid weight '" + std::string(w) + "'");
    d.weight = weight;
  }
  auto parts = split(body, ':');
  if (parts[0] == "fixed" && parts.size() == 2) {
    d.kind = DurationSpec::Kind::fixed;
    d.lo_ms = d.hi_ms = parse_ms(parts[1]);
  } else if (parts[0] == "uniform" && parts.size() == 3) {
    d.kind = DurationSpec::Kind::uniform;
    d.lo_ms = parse_ms(parts[1]);
    d.hi_ms = parse_ms(parts[2]);
    if (d.lo_ms > d.hi_ms) throw Error("uniform duration has lo > hi");
  } else {
    throw Error("invalid duration '" + std::string(text) + "'");
  }
  return d;
}

std::string format_duration(const DurationSpec& d) {
  std::string out = d.kind == DurationSpec::Kind::fixed
                        ? "fixed:" + std::to_string(d.lo_ms)
                        : "uniform:" + std::to_string(d.lo_ms) + ":" + std::to_string(d.hi_ms);
  if (d.weight != 1.0) out += "*" + format_double(d.weight);
  if (d.fail_all) {
    out += "!fail";
  } else if (!d.fail_indices.empty()) {
    out += "!fail=";
    bool first = true;
    for (int i : d.fail_indices) {
      if (!first) out += ',';
      out += std::to_string(i);
      first = false;
    }
  }
  return out;
}

WorkflowSpec parse_workflow(std::string_view text) {
  WorkflowSpec spec;
  bool have_name = false;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto tokens = tokenize(line, lineno);
    if (tokens.empty()) continue;
    const std::string& directive = tokens[0].text;

    if (directive == "workflow") {
      if (tokens.size() != 2) throw ParseError(lineno, "expected 'workflow <name>'");
      if (have_name) throw ParseError(lineno, "duplicate workflow line");
      spec.name = tokens[1].text;
      have_name = true;
    } else if (directive == "pool") {
      if (tokens.size() != 3) throw ParseError(lineno, "expected 'pool <name> <slots>'");
      spec.pools.push_back(PoolSpec{tokens[1].text, parse_count(tokens[2].text, lineno, "slot count")});
    } else if (directive == "dep") {
      if (tokens.size() != 4 || tokens[2].text != "->") throw ParseError(lineno, "expected 'dep <id> -> <id>'");
      spec.edges.push_back(Edge{tokens[1].text, tokens[3].text});
    } else if (directive == "group") {
      if (tokens.size() < 2) throw ParseError(lineno, "expected 'group <gid>'");
      GroupSpec g{tokens[1].text, std::nullopt};
      for (std::size_t i = 2; i < tokens.size(); ++i) {
        const auto& t = tokens[i].text;
        if (t.rfind("mapped_over=", 0) != 0 || g.mapped_over)
          throw ParseError(lineno, "unexpected group attribute '" + t + "'");
        auto value = t.substr(12);
        if (value.empty()) throw ParseError(lineno, "empty mapped_over");
        g.mapped_over = CommRef::parse(value);
      }
      spec.groups.push_back(std::move(g));
    } else if (directive == "task") {
      if (tokens.size() < 2) throw ParseError(lineno, "expected 'task <id> ...'");
      TaskSpec task;
      task.id = tokens[1].text;
      bool have_pool = false;
      bool have_action = false;
      std::string returns;
      std::set<std::string> seen;
      for (std::size_t i = 2; i < tokens.size(); ++i) {
        const auto& t = tokens[i].text;
        auto eq = t.find('=');
        if (eq == std::string::npos) throw ParseError(lineno, "expected key=value, got '" + t + "'");
        std::string key = t.substr(0, eq);
        std::string value = t.substr(eq + 1);
        if (key != "param" && !seen.insert(key).second)
          throw ParseError(lineno, "duplicate attribute '" + key + "'");
        if (key == "pool") {
          task.pool = value;
          have_pool = true;
        } else if (key == "group") {
          task.group = value;
        } else if (key == "action") {
          task.action = parse_action(value, lineno);
          have_action = true;
        } else if (key == "produces") {
          if (value.empty()) throw ParseError(lineno, "empty produces key");
          task.produces = value;
        } else if (key == "param") {
          task.params.push_back(value);
        } else if (key == "returns") {
          auto colon = value.find(':');
          if (colon == std::string::npos || !kReturnTypes.count(value.substr(0, colon)))
            throw ParseError(lineno, "returns must be <int|str|list|labels>:<template>");
          returns = value;
        } else {
          throw ParseError(lineno, "unknown task attribute '" + key + "'");
        }
      }
      if (!have_pool) throw ParseError(lineno, "task " + task.id + " has no pool");
      if (!have_action) throw ParseError(lineno, "task " + task.id + " has no action");
      if (!returns.empty()) {
        if (task.action.kind != ActionSpec::Kind::sim)
          throw ParseError(lineno, "returns= is only valid for sim actions");
        task.action.returns = returns;
      }
      spec.tasks.push_back(std::move(task));
    } else {
      throw ParseError(lineno, "unknown directive '" + directive + "'");
    }
  }
  if (!have_name) throw ParseError(lineno == 0 ? 1 : lineno, "missing 'workflow <name>' line");
  return spec;
}

WorkflowSpec parse_workflow_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read workflow file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_workflow(ss.str());
}

std::string format_workflow(const WorkflowSpec& spec) {
  std::ostringstream os;
  os << "workflow " << spec.name << '\n';
  for (const auto& p : spec.pools) os << "pool " << p.name << ' ' << p.slots << '\n';
  for (const auto& g : spec.groups) {
    os << "group " << g.id;
    if (g.mapped_over) os << " mapped_over=" << g.mapped_over->str();
    os << '\n';
  }
  for (const auto& t : spec.tasks) {
    os << "task " << t.id << " pool=" << t.pool;
    if (t.group) os << " group=" << *t.group;
    switch (t.action.kind) {
      case ActionSpec::Kind::shell: os << " action=shell:" << quote(t.action.command); break;
      case ActionSpec::Kind::sim: os << " action=sim:" << format_duration(t.action.duration); break;
      case ActionSpec::Kind::builtin: os << " action=builtin:" << maybe_quote(t.action.step); break;
    }
    if (t.produces) os << " produces=" << *t.produces;
    for (const auto& p : t.params) os << " param=" << maybe_quote(p);
    if (!t.action.returns.empty()) os << " returns=" << maybe_quote(t.action.returns);
    os << '\n';
  }
  for (const auto& e : spec.edges) os << "dep " << e.from << " -> " << e.to << '\n';
  return os.str();
}

}  // namespace screenflow
