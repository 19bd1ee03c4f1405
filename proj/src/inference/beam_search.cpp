#include "dnmt/inference/beam_search.hpp"

namespace dnmt::inference {

double length_penalty(std::size_t length, double alpha) {
  if (length < 1) throw ContractError("length_penalty needs length >= 1");
  return std::pow((5.0 + static_cast<double>(length)) / 6.0, alpha);
}

}  // namespace dnmt::inference
