#include "asyncfs/harness/reference_model.h"

#include <cstdio>

namespace asyncfs {

std::string ParentPath(const std::string& path) {
  auto slash = path.rfind('/');
  return slash == 0 || slash == std::string::npos ? "/" : path.substr(0, slash);
}

std::string BaseName(const std::string& path) { return path.substr(path.rfind('/') + 1); }

bool IsWithin(const std::string& path, const std::string& ancestor) {
  if (ancestor == "/") return true;
  return path.size() >= ancestor.size() && path.compare(0, ancestor.size(), ancestor) == 0 &&
         (path.size() == ancestor.size() || path[ancestor.size()] == '/');
}

ReferenceModel::ReferenceModel() = default;

const ViewNode* ReferenceModel::Find(const std::string& path) const {
  auto it = view_.find(path);
  return it == view_.end() ? nullptr : &it->second;
}

bool ReferenceModel::IsDir(const std::string& path) const {
  if (path == "/") return true;
  const ViewNode* n = Find(path);
  return n && n->kind == InodeKind::kDirectory;
}

bool ReferenceModel::HasChildren(const std::string& dir) const {
  auto it = view_.lower_bound(dir + "/");
  return it != view_.end() && IsWithin(it->first, dir);
}

std::map<std::string, InodeKind> ReferenceModel::List(const std::string& dir) const {
  std::map<std::string, InodeKind> out;
  std::string prefix = dir == "/" ? "/" : dir + "/";
  for (auto it = view_.lower_bound(prefix); it != view_.end() && it->first.compare(0, prefix.size(), prefix) == 0;
       ++it) {
    std::string rest = it->first.substr(prefix.size());
    if (rest.find('/') == std::string::npos) out[rest] = it->second.kind;
  }
  return out;
}

std::optional<std::string> ReferenceModel::Apply(Opcode op, const std::string& path, const std::string& dst,
                                                  uint16_t perms) {
  auto fail = [&](const char* why) { return std::optional<std::string>(std::string(why) + ": " + path); };
  switch (op) {
    case Opcode::kCreate:
    case Opcode::kMkdir:
      if (!IsDir(ParentPath(path))) return fail("parent is not a directory");
      if (Find(path)) return fail("already exists");
      view_[path] = ViewNode{op == Opcode::kMkdir ? InodeKind::kDirectory : InodeKind::kFile, perms};
      return std::nullopt;
    case Opcode::kDelete: {
      const ViewNode* n = Find(path);
      if (!n || n->kind != InodeKind::kFile) return fail("no such file");
      view_.erase(path);
      return std::nullopt;
    }
    case Opcode::kRmdir:
      if (!Find(path) || !IsDir(path)) return fail("no such directory");
      if (HasChildren(path)) return fail("directory not empty");
      view_.erase(path);
      return std::nullopt;
    case Opcode::kRename: {
      if (!Find(path)) return fail("rename source missing");
      if (Find(dst)) return fail("rename target exists");
      if (!IsDir(ParentPath(dst))) return fail("rename target parent missing");
      if (IsWithin(dst, path)) return fail("rename into own subtree");
      std::vector<std::pair<std::string, ViewNode>> moved = {{dst, view_.at(path)}};
      view_.erase(path);
      for (auto it = view_.lower_bound(path + "/"); it != view_.end() && IsWithin(it->first, path);) {
        moved.emplace_back(dst + it->first.substr(path.size()), it->second);
        it = view_.erase(it);
      }
      for (auto& [p, n] : moved) view_[p] = n;
      return std::nullopt;
    }
    default: return std::nullopt;  // reads change nothing
  }
}

std::string ReferenceModel::Serialize(const FsView& view) {
  std::string out;
  char buf[16];
  for (const auto& [path, node] : view) {
    std::snprintf(buf, sizeof buf, " %c %04o\n", node.kind == InodeKind::kDirectory ? 'd' : 'f', node.perms);
    out += path;
    out += buf;
  }
  return out;
}

}  // namespace asyncfs
