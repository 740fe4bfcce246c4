#ifndef GBF_ERROR_HPP_
#define GBF_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace gbf {

// Raised for violated preconditions and numerically undefined inputs
// (degenerate MLE, vanishing curvature, malformed files, ...).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace gbf

#endif  // GBF_ERROR_HPP_
