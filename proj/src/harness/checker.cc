#include <algorithm>
#include <limits>

#include "asyncfs/harness/reference_model.h"
#include "asyncfs/harness/runner.h"

namespace asyncfs {

namespace {

constexpr Micros kNever = std::numeric_limits<Micros>::max();

bool IsUpdate(Opcode op) {
  return op == Opcode::kCreate || op == Opcode::kDelete || op == Opcode::kMkdir || op == Opcode::kRmdir ||
         op == Opcode::kRename;
}

struct Applied {
  const HistoryRecord* rec;
  Micros ts;
  Micros completed;  // kNever when the client never saw the acknowledgement
};

// Effect of one update on one path.
struct PathEvent {
  bool present;
  InodeKind kind;
  Micros issued;
  Micros completed;
};
using Histories = std::map<std::string, std::vector<PathEvent>>;

struct Window {
  bool can_absent = false;
  bool can_file = false;
  bool can_dir = false;
  bool must_present = false;
};

// States a path may show to a read running over [issued, completed]:
// every update acknowledged before the read began is in, and nothing issued
// after it ended is.
Window WindowFor(const std::vector<PathEvent>* h, Micros issued, Micros completed) {
  Window w;
  size_t lo = 0, hi = 0;
  if (h) {
    for (size_t i = 0; i < h->size(); ++i) {
      if ((*h)[i].completed <= issued) lo = i + 1;
      if ((*h)[i].issued <= completed) hi = i + 1;
    }
  }
  hi = std::max(hi, lo);
  w.must_present = true;
  for (size_t k = lo; k <= hi; ++k) {
    bool present = k > 0 && (*h)[k - 1].present;
    if (!present) {
      w.can_absent = true;
      w.must_present = false;
    } else if ((*h)[k - 1].kind == InodeKind::kDirectory) {
      w.can_dir = true;
    } else {
      w.can_file = true;
    }
  }
  return w;
}

std::string Describe(const HistoryRecord& r) {
  std::string s = std::string(OpcodeName(r.spec.op)) + " " + r.spec.path;
  if (!r.spec.dst.empty()) s += " -> " + r.spec.dst;
  return s + " (request " + std::to_string(r.result.request) + ", ts " + std::to_string(r.result.ts) + ")";
}

std::optional<std::string> CheckRead(const HistoryRecord& r, const Histories& hist) {
  const std::string& dir = r.spec.path;
  Micros from = r.result.issued, to = r.result.completed;
  auto find = [&](const std::string& p) -> const std::vector<PathEvent>* {
    auto it = hist.find(p);
    return it == hist.end() ? nullptr : &it->second;
  };
  if (r.result.err == Errc::kNoEnt) {
    if (dir != "/" && !WindowFor(find(dir), from, to).can_absent) return "read saw no directory " + dir;
    return std::nullopt;
  }
  if (r.result.err != Errc::kOk) return std::nullopt;
  if (dir != "/" && !WindowFor(find(dir), from, to).can_dir) return "read found directory " + dir + " too early";

  std::map<std::string, InodeKind> seen;
  for (const auto& e : r.result.entries) seen[e.key.name] = e.kind;
  std::string prefix = dir == "/" ? "/" : dir + "/";
  uint64_t must = 0, may = 0;
  std::set<std::string> names;
  for (auto it = hist.lower_bound(prefix); it != hist.end() && it->first.compare(0, prefix.size(), prefix) == 0;
       ++it) {
    std::string rest = it->first.substr(prefix.size());
    if (rest.find('/') == std::string::npos) names.insert(rest);
  }
  for (const auto& [name, kind] : seen) names.insert(name);
  for (const auto& name : names) {
    Window w = WindowFor(find(prefix + name), from, to);
    if (w.must_present) ++must;
    if (w.can_file || w.can_dir) ++may;
    if (r.spec.op != Opcode::kReadDir) continue;
    auto s = seen.find(name);
    bool ok = s == seen.end() ? w.can_absent : (s->second == InodeKind::kDirectory ? w.can_dir : w.can_file);
    if (!ok) {
      return "readdir " + dir + (s == seen.end() ? " misses " : " shows ") + name + " over [" + std::to_string(from) +
             ", " + std::to_string(to) + "]";
    }
  }
  if (r.spec.op == Opcode::kStatDir && r.result.rec) {
    uint64_t size = r.result.rec->size;
    if (size < must || size > may) {
      return "statdir " + dir + " size " + std::to_string(size) + " outside [" + std::to_string(must) + ", " +
             std::to_string(may) + "]";
    }
  }
  return std::nullopt;
}

}  // namespace

CheckOutcome CheckHistory(const std::vector<HistoryRecord>& history, const Cluster& cluster) {
  CheckOutcome out;
  auto fail = [&](std::string why) {
    if (out.pass) out.divergence = std::move(why);
    out.pass = false;
  };

  ViewReport report = cluster.BuildView();
  if (!report.problems.empty()) fail("inconsistent server state: " + report.problems.front());

  // Successful updates, including ones whose acknowledgement was lost.
  std::vector<Applied> applied;
  for (const auto& r : history) {
    if (!IsUpdate(r.spec.op)) continue;
    if (r.result.err == Errc::kOk) {
      applied.push_back({&r, r.result.ts, r.result.completed});
    } else if (r.result.err == Errc::kIo) {
      for (RequestId id : r.result.attempts) {
        auto resp = cluster.FindCachedResponse(id);
        if (resp && resp->err == Errc::kOk) {
          applied.push_back({&r, resp->ts, kNever});
          break;
        }
      }
    }
  }
  std::sort(applied.begin(), applied.end(), [](const Applied& a, const Applied& b) {
    return std::tie(a.ts, a.rec->result.server, a.rec->result.request) <
           std::tie(b.ts, b.rec->result.server, b.rec->result.request);
  });

  ReferenceModel model;
  Histories hist;
  for (const auto& a : applied) {
    const OpSpec& s = a.rec->spec;
    Micros issued = a.rec->result.issued;
    if (s.op == Opcode::kRename) {
      // Every node under the source moves.
      std::vector<std::pair<std::string, InodeKind>> moved;
      for (const auto& [p, n] : model.view()) {
        if (IsWithin(p, s.path)) moved.emplace_back(p, n.kind);
      }
      for (const auto& [p, kind] : moved) {
        hist[p].push_back({false, kind, issued, a.completed});
        hist[s.dst + p.substr(s.path.size())].push_back({true, kind, issued, a.completed});
      }
    } else {
      bool present = s.op == Opcode::kCreate || s.op == Opcode::kMkdir;
      InodeKind kind = s.op == Opcode::kMkdir || s.op == Opcode::kRmdir ? InodeKind::kDirectory : InodeKind::kFile;
      hist[s.path].push_back({present, kind, issued, a.completed});
    }
    if (auto err = model.Apply(s.op, s.path, s.dst, s.perms)) {
      fail("acknowledged update cannot be ordered: " + Describe(*a.rec) + ": " + *err);
      break;
    }
  }

  if (out.pass) {
    std::string want = ReferenceModel::Serialize(model.view());
    std::string got = ReferenceModel::Serialize(report.view);
    if (want != got) {
      size_t i = 0;
      while (i < want.size() && i < got.size() && want[i] == got[i]) ++i;
      size_t line = want.rfind('\n', i == 0 ? 0 : i - 1);
      line = line == std::string::npos ? 0 : line + 1;
      auto cut = [&](const std::string& s) { return s.substr(line, s.find('\n', line) - line); };
      fail("final state differs from the reference model: expected '" + cut(want) + "', found '" + cut(got) + "'");
    }
  }

  for (const auto& r : history) {
    if (r.spec.op != Opcode::kReadDir && r.spec.op != Opcode::kStatDir) continue;
    ++out.reads_checked;
    if (auto err = CheckRead(r, hist)) {
      ++out.read_violations;
      fail("read not consistent with acknowledged updates: " + *err);
    }
  }
  return out;
}

}  // namespace asyncfs
