#pragma once

#include <nlohmann/json.hpp>

#include "comok/action.hpp"
#include "comok/se3.hpp"

namespace comok::detail {

inline nlohmann::json pose_json(const Pose& p) {
  const auto a = p.to_array();
  return nlohmann::json(std::vector<double>(a.begin(), a.end()));
}

inline Pose pose_from(const nlohmann::json& j) {
  std::array<double, 7> a{};
  for (std::size_t i = 0; i < 7; ++i) a[i] = j.at(i);
  return Pose::from_array(a);
}

nlohmann::json chain_json(const CoMOKChain& chain);
CoMOKChain chain_from(const nlohmann::json& j);
nlohmann::json stage_json(const StageAction& st);
StageAction stage_from(const nlohmann::json& j);

}  // namespace comok::detail
