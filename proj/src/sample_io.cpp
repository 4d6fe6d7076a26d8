#include "abtm/sample_io.hpp"

#include <json.hpp>

#include "abtm/error.hpp"

namespace abtm {

std::string sample_to_json(const Sample& sample) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : sample) j[k] = v;
  return j.dump();
}

Sample sample_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SyntaxError(e.byte > 0 ? e.byte - 1 : 0, e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "sample must be a JSON object");
  Sample out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it.value().is_number()) {
      throw Error(ErrorCode::InvalidArgument, "value of '" + it.key() + "' is not a number");
    }
    out[it.key()] = it.value().get<double>();
  }
  return out;
}

}  // namespace abtm
