#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace budgetseg {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two masks (or a mask and an RLE header) disagree on width/height.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An input violated a documented precondition (range, ordering, emptiness).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A structured payload could not be parsed. Keeps the raw text for audit.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::string raw)
      : Error(what), raw_(std::move(raw)) {}

  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

/// The judge service could not be reached or answered with a transport-level failure.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// A judge interaction failed for a specific sample after all retries.
class JudgeError : public Error {
 public:
  JudgeError(const std::string& sample_id, const std::string& what)
      : Error(sample_id + ": " + what), sample_id_(sample_id) {}

  const std::string& sample_id() const noexcept { return sample_id_; }

 private:
  std::string sample_id_;
};

/// Batch input problems that are reported together rather than one at a time.
class ItemizedError : public Error {
 public:
  ItemizedError(const std::string& what, std::vector<std::string> items)
      : Error(compose(what, items)), items_(std::move(items)) {}

  const std::vector<std::string>& items() const noexcept { return items_; }

 private:
  static std::string compose(const std::string& what,
                             const std::vector<std::string>& items) {
    std::string out = what;
    for (const auto& item : items) out += "\n  - " + item;
    return out;
  }

  std::vector<std::string> items_;
};

}  // namespace budgetseg
