#ifndef DAB_ERROR_HPP
#define DAB_ERROR_HPP

#include <stdexcept>
#include <string>

namespace dab {

// Base of every error raised by the library. The CLI maps it to a nonzero exit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error { using Error::Error; };
class DegenerateStatsError : public Error { using Error::Error; };
class MissingStatsError : public Error { using Error::Error; };
class UnsupportedLeadError : public Error { using Error::Error; };
class DecompositionError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class WindowError : public Error { using Error::Error; };
class NumericalError : public Error { using Error::Error; };
class EnsembleSizeError : public Error { using Error::Error; };
class AlignmentError : public Error { using Error::Error; };
class UndefinedAccError : public Error { using Error::Error; };
class CycleInitError : public Error { using Error::Error; };
class FormatError : public Error { using Error::Error; };
class MissingDataError : public Error { using Error::Error; };

}  // namespace dab

#endif  // DAB_ERROR_HPP
