#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace cim {

struct Tensor {
  std::string name;
  std::vector<int64_t> dims;
  std::vector<int32_t> values;

  int64_t elements() const;
  bool operator==(const Tensor&) const = default;
};

using TensorMap = std::map<std::string, Tensor>;

// {"tensors":[{name,dims,values}]} or a bare array of tensors.
TensorMap parse_tensors(const nlohmann::json& doc);
TensorMap load_tensors(const std::string& path);
nlohmann::json tensors_to_json(const TensorMap& tensors);
void save_tensors(const std::string& path, const TensorMap& tensors);

}  // namespace cim
