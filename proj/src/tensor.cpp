#include "cimmlc/tensor.hpp"

#include <fstream>
#include <sstream>

#include "cimmlc/errors.hpp"

namespace cim {

using nlohmann::json;

int64_t Tensor::elements() const {
  int64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

TensorMap parse_tensors(const json& doc) {
  TensorMap out;
  try {
    const json& arr = doc.is_array() ? doc : doc.at("tensors");
    for (const auto& j : arr) {
      Tensor t;
      t.name = j.at("name").get<std::string>();
      t.dims = j.at("dims").get<std::vector<int64_t>>();
      t.values = j.at("values").get<std::vector<int32_t>>();
      if (static_cast<int64_t>(t.values.size()) != t.elements())
        throw ValidationError("tensor '" + t.name + "': " + std::to_string(t.values.size()) +
                              " values for " + std::to_string(t.elements()) + " elements");
      if (!out.emplace(t.name, t).second) throw ValidationError("duplicate tensor '" + t.name + "'");
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed tensor file: ") + e.what());
  }
  return out;
}

TensorMap load_tensors(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open tensor file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  json doc;
  try {
    doc = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("tensor file is not valid JSON: ") + e.what());
  }
  return parse_tensors(doc);
}

json tensors_to_json(const TensorMap& tensors) {
  json arr = json::array();
  for (const auto& [name, t] : tensors) arr.push_back({{"name", name}, {"dims", t.dims}, {"values", t.values}});
  return {{"tensors", arr}};
}

void save_tensors(const std::string& path, const TensorMap& tensors) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out << tensors_to_json(tensors).dump() << "\n";
}

}  // namespace cim
