#include "asyncfs/harness/workload.h"

#include <cmath>

namespace asyncfs {

std::optional<Pattern> ParsePattern(std::string_view s) {
  if (s == "single-dir") return Pattern::kSingleDir;
  if (s == "multi-dir") return Pattern::kMultiDir;
  if (s == "burst") return Pattern::kBurst;
  if (s == "mixed") return Pattern::kMixed;
  return std::nullopt;
}

std::string_view PatternName(Pattern p) {
  switch (p) {
    case Pattern::kSingleDir: return "single-dir";
    case Pattern::kMultiDir: return "multi-dir";
    case Pattern::kBurst: return "burst";
    case Pattern::kMixed: return "mixed";
  }
  return "?";
}

std::optional<Mix> ParseMix(std::string_view s) {
  if (s == "pangu") return Mix::kPangu;
  if (s == "datacenter") return Mix::kDataCenter;
  return std::nullopt;
}

std::string_view MixName(Mix m) { return m == Mix::kPangu ? "pangu" : "datacenter"; }

std::vector<RatioRow> RatioTable(Mix m) {
  if (m == Mix::kPangu) {
    // Group share times the share within the group.
    auto in = [](double group, double share, double total) { return group * share / total; };
    double upd = 31.14 + 38.62 + 0.01 + 0.01 + 30.21;
    double rd = 6.61 + 93.39;
    double oth = 80.85 + 19.00 + 0.15;
    return {
        {"create", in(30.76, 31.14, upd)},  {"delete", in(30.76, 38.62, upd)},
        {"mkdir", in(30.76, 0.01, upd)},    {"rmdir", in(30.76, 0.01, upd)},
        {"rename", in(30.76, 30.21, upd)},  {"statdir", in(4.19, 6.61, rd)},
        {"readdir", in(4.19, 93.39, rd)},   {"open/close", in(65.05, 80.85, oth)},
        {"stat", in(65.05, 19.00, oth)},    {"others", in(65.05, 0.15, oth)},
    };
  }
  return {
      {"open/close", 52.6}, {"stat", 12.4}, {"create", 9.58}, {"delete", 11.9},
      {"rename", 9.3},      {"chmod", 0.1}, {"readdir", 3.9}, {"statdir", 0.2},
  };
}

Workload::Workload(WorkloadSpec spec) : spec_(std::move(spec)), rng_(spec_.seed) {
  size_t n = 1;
  if (spec_.pattern == Pattern::kMultiDir || spec_.pattern == Pattern::kBurst) n = spec_.dirs;
  if (spec_.pattern == Pattern::kMixed) n = spec_.mixed_dirs;
  for (size_t i = 0; i < n; ++i) dirs_.push_back("/d" + std::to_string(i));
  live_.resize(n);
  if (spec_.pattern == Pattern::kMixed) {
    table_ = RatioTable(spec_.mix);
    std::vector<double> w;
    for (const auto& r : table_) w.push_back(r.share);
    pick_row_ = std::discrete_distribution<size_t>(w.begin(), w.end());
  }
}

std::vector<std::vector<OpSpec>> Workload::Prefill() {
  std::vector<std::vector<OpSpec>> phases(1);
  for (const auto& d : dirs_) phases[0].push_back({Opcode::kMkdir, d, {}, 0755, "mkdir"});
  if (spec_.pattern != Pattern::kMixed) return phases;
  // Deletes outnumber creates in both tables; seed enough files to cover the gap.
  size_t per_dir = std::max<size_t>(8, static_cast<size_t>(std::ceil(0.04 * spec_.ops / dirs_.size())));
  phases.emplace_back();
  for (size_t d = 0; d < dirs_.size(); ++d) {
    for (size_t i = 0; i < per_dir; ++i) phases[1].push_back({Opcode::kCreate, NewFile(d), {}, 0644, "create"});
  }
  return phases;
}

size_t Workload::PickDir() {
  size_t n = dirs_.size();
  if (!spec_.skew || n < 5) return std::uniform_int_distribution<size_t>(0, n - 1)(rng_);
  size_t hot = std::max<size_t>(1, n / 5);
  if (std::bernoulli_distribution(0.8)(rng_)) return std::uniform_int_distribution<size_t>(0, hot - 1)(rng_);
  return std::uniform_int_distribution<size_t>(hot, n - 1)(rng_);
}

std::string Workload::NewFile(size_t dir) { return dirs_[dir] + "/f" + std::to_string(next_name_++); }

std::optional<std::string> Workload::TakeLiveFile(size_t dir) {
  auto& v = live_[dir];
  if (v.empty()) return std::nullopt;
  size_t i = std::uniform_int_distribution<size_t>(0, v.size() - 1)(rng_);
  std::swap(v[i], v.back());
  std::string out = std::move(v.back());
  v.pop_back();
  return out;
}

OpSpec Workload::Mixed() {
  const std::string& label = table_[pick_row_(rng_)].label;
  size_t d = PickDir();
  if (label == "create") return {Opcode::kCreate, NewFile(d), {}, 0644, label};
  if (label == "delete") {
    if (auto f = TakeLiveFile(d)) return {Opcode::kDelete, *f, {}, 0644, label};
    return {Opcode::kCreate, NewFile(d), {}, 0644, "create"};
  }
  if (label == "rename") {
    // File rename, possibly across directories.
    if (auto f = TakeLiveFile(d)) return {Opcode::kRename, *f, NewFile(PickDir()), 0644, label};
    return {Opcode::kCreate, NewFile(d), {}, 0644, "create"};
  }
  if (label == "mkdir") return {Opcode::kMkdir, dirs_[d] + "/d" + std::to_string(next_name_++), {}, 0755, label};
  if (label == "rmdir") {
    if (!empty_dirs_.empty()) {
      std::string p = std::move(empty_dirs_.back());
      empty_dirs_.pop_back();
      return {Opcode::kRmdir, p, {}, 0755, label};
    }
    return {Opcode::kRmdir, dirs_[d], {}, 0755, label};  // not empty: fails harmlessly
  }
  if (label == "statdir") return {Opcode::kStatDir, dirs_[d], {}, 0644, label};
  if (label == "readdir") return {Opcode::kReadDir, dirs_[d], {}, 0644, label};
  // open/close, stat and the rest touch one file's inode only.
  Opcode op = label == "open/close" ? (produced_ % 2 ? Opcode::kClose : Opcode::kOpen) : Opcode::kStat;
  const auto& v = live_[d];
  std::string path = v.empty() ? dirs_[d] + "/f_missing" : v[std::uniform_int_distribution<size_t>(0, v.size() - 1)(rng_)];
  return {op, path, {}, 0644, label};
}

std::optional<OpSpec> Workload::Next() {
  if (produced_ >= spec_.ops) return std::nullopt;
  OpSpec op;
  switch (spec_.pattern) {
    case Pattern::kSingleDir: op = {Opcode::kCreate, NewFile(0), {}, 0644, "create"}; break;
    case Pattern::kMultiDir: op = {Opcode::kCreate, NewFile(PickDir()), {}, 0644, "create"}; break;
    case Pattern::kBurst:
      if (burst_left_ == 0) {
        burst_dir_ = PickDir();
        burst_left_ = std::max<uint32_t>(1, spec_.burst_size);
      }
      --burst_left_;
      op = {Opcode::kCreate, NewFile(burst_dir_), {}, 0644, "create"};
      break;
    case Pattern::kMixed: op = Mixed(); break;
  }
  ++produced_;
  if (optimistic_) {
    OpResult ok;
    ok.err = Errc::kOk;
    OnComplete(op, ok);
  }
  return op;
}

void Workload::OnComplete(const OpSpec& op, const OpResult& r) {
  auto dir_of = [&](const std::string& path) -> std::optional<size_t> {
    std::string parent = path.substr(0, path.rfind('/'));
    for (size_t i = 0; i < dirs_.size(); ++i) {
      if (dirs_[i] == parent) return i;
    }
    return std::nullopt;
  };
  switch (op.op) {
    case Opcode::kCreate:
      if (r.err == Errc::kOk) {
        if (auto d = dir_of(op.path)) live_[*d].push_back(op.path);
      }
      break;
    case Opcode::kRename:
      if (r.err == Errc::kOk) {
        if (auto d = dir_of(op.dst)) live_[*d].push_back(op.dst);
      } else if (r.err != Errc::kIo) {
        if (auto d = dir_of(op.path)) live_[*d].push_back(op.path);
      }
      break;
    case Opcode::kMkdir:
      if (r.err == Errc::kOk && op.label == "mkdir" && !dir_of(op.path + "/x")) empty_dirs_.push_back(op.path);
      break;
    default: break;
  }
}

std::vector<OpSpec> Workload::Stream() {
  optimistic_ = true;
  OpResult ok;
  for (const auto& phase : Prefill()) {
    for (const auto& op : phase) OnComplete(op, ok);
  }
  std::vector<OpSpec> out;
  while (auto op = Next()) out.push_back(std::move(*op));
  optimistic_ = false;
  return out;
}

double UnreadUpdateShare(const std::vector<OpSpec>& stream) {
  auto is_update = [](Opcode op) {
    return op == Opcode::kCreate || op == Opcode::kDelete || op == Opcode::kMkdir || op == Opcode::kRmdir ||
           op == Opcode::kRename;
  };
  auto parent = [](const std::string& p) { return p.substr(0, p.rfind('/')); };
  // Directory-level events per directory, in stream order: true for a read.
  std::map<std::string, std::vector<bool>> events;
  for (const auto& op : stream) {
    if (op.op == Opcode::kStatDir || op.op == Opcode::kReadDir) {
      events[op.path].push_back(true);
    } else if (is_update(op.op)) {
      events[parent(op.path)].push_back(false);
      if (op.op == Opcode::kRename && parent(op.dst) != parent(op.path)) events[parent(op.dst)].push_back(false);
    }
  }
  uint64_t updates = 0, unread = 0;
  for (const auto& [dir, ev] : events) {
    for (size_t i = 0; i < ev.size(); ++i) {
      if (ev[i]) continue;
      ++updates;
      if (i + 1 == ev.size() || !ev[i + 1]) ++unread;
    }
  }
  return updates == 0 ? 1.0 : static_cast<double>(unread) / updates;
}

}  // namespace asyncfs
