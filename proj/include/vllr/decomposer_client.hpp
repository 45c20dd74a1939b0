#pragma once

#include <string>

#include "vllr/scene_graph.hpp"
#include "vllr/service.hpp"

namespace vllr {

inline constexpr const char* kPromptTemplateVersion = "subgoal-decomposition/v1";

struct DecomposeOptions {
  std::string prompt_template;  // opaque, supplied by config
  std::string prompt_template_version = kPromptTemplateVersion;
};

// Asks a remote planner for a plan. The response must pass validate_plan
// against the same scene graph; otherwise a ProtocolError carries the raw
// body.
inline SubgoalPlan decompose_external(const ServiceEndpoint& endpoint, const SceneGraph& graph,
                                      const TaskInstruction& instr, ServiceTelemetry& telemetry,
                                      const DecomposeOptions& opts = {}) {
  nlohmann::json request = {{"scene_graph", to_json(graph)},
                            {"instruction", to_json(instr)},
                            {"prompt_template_version", opts.prompt_template_version}};
  if (!opts.prompt_template.empty()) request["prompt_template"] = opts.prompt_template;
  const std::string raw = post_json(endpoint, request, telemetry);
  SubgoalPlan plan = plan_from_json(parse_response(raw), raw);
  const auto violations = validate_plan(plan, graph);
  if (!violations.empty()) {
    throw ProtocolError("plan from endpoint is invalid: subgoal " + std::to_string(violations.front().subgoal_index) +
                            ": " + violations.front().message,
                        raw);
  }
  return plan;
}

}  // namespace vllr
