#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace enet {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class BuildError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class CorruptIndicesError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class PaletteError : public Error {
 public:
  using Error::Error;
};

/// Error attributed to a single graph node.
class NodeError : public Error {
 public:
  NodeError(int node_id, const std::string& what)
      : Error("node " + std::to_string(node_id) + ": " + what), node_id_(node_id) {}

  int node_id() const noexcept { return node_id_; }

 private:
  int node_id_;
};

class ValidationError : public NodeError {
 public:
  using NodeError::NodeError;
};

class FoldError : public NodeError {
 public:
  using NodeError::NodeError;
};

class ExecutionError : public NodeError {
 public:
  using NodeError::NodeError;
};

/// Malformed file content. `offset` is the byte (or line, for text formats)
/// position where parsing stopped.
class FormatError : public Error {
 public:
  FormatError(std::size_t offset, const std::string& what)
      : Error(what + " (at offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace enet
