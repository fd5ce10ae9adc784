#pragma once

#include <optional>
#include <string>

#include "asyncfs/harness/cluster.h"

namespace asyncfs {

// Synchronous in-memory tree. Successful operations are replayed into it in
// linearization order; each must apply cleanly.
class ReferenceModel {
 public:
  ReferenceModel();

  // Applies a successful update. Returns a description if the operation could
  // not have succeeded against the current state, nullopt otherwise.
  std::optional<std::string> Apply(Opcode op, const std::string& path, const std::string& dst, uint16_t perms);

  const ViewNode* Find(const std::string& path) const;
  // Names directly under `dir`, with their kinds.
  std::map<std::string, InodeKind> List(const std::string& dir) const;
  const FsView& view() const { return view_; }

  // One line per node: "<path> <d|f> <octal perms>".
  static std::string Serialize(const FsView& view);

 private:
  bool IsDir(const std::string& path) const;
  bool HasChildren(const std::string& dir) const;

  FsView view_;  // "/" is implicit
};

std::string ParentPath(const std::string& path);
std::string BaseName(const std::string& path);
// True if `path` equals `ancestor` or lies below it.
bool IsWithin(const std::string& path, const std::string& ancestor);

}  // namespace asyncfs
