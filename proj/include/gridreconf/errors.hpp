#pragma once

#include <stdexcept>
#include <string>

namespace gridreconf {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Network construction or file contents violate a structural invariant.
class InvalidNetwork : public Error {
 public:
  using Error::Error;
};

/// A configuration references a line pair that the network does not have.
class InvalidLine : public Error {
 public:
  using Error::Error;
};

class NotRadial : public Error {
 public:
  using Error::Error;
};

class TooLarge : public Error {
 public:
  using Error::Error;
};

class EmptyProfile : public Error {
 public:
  using Error::Error;
};

class TemplateMissingSlot : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class EndpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace gridreconf
