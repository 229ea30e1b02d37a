#include "expbert/representation.hpp"

#include <algorithm>
#include <unordered_set>

#include "expbert/error.hpp"
#include "expbert/templating.hpp"

namespace expbert {

std::vector<TextSource> label_sources(const LabelSpace& labels) {
  std::vector<TextSource> out;
  for (const auto& label : labels.labels()) out.push_back({"label:" + label.name, label.description});
  return out;
}

std::vector<TextSource> explanation_sources(std::span<const Explanation> explanations) {
  std::vector<TextSource> out;
  for (const auto& e : explanations) out.push_back({e.id, e.template_text});
  return out;
}

std::vector<TextSource> pattern_sources(const PatternSet& patterns) {
  std::vector<TextSource> out;
  for (const auto& p : patterns.patterns) out.push_back({"pattern:" + p, p});
  return out;
}

std::vector<TextSource> dictionary_sources(std::span<const std::string> names) {
  std::vector<TextSource> out;
  for (const auto& name : names) out.push_back({"ontology:" + name, name});
  return out;
}

BlockVector interpret_sources(const Instance& instance, std::span<const TextSource> sources,
                              const Interpreter& interpreter) {
  BlockVector out;
  out.values.reserve(sources.size() * interpreter.dim());
  for (const auto& source : sources) {
    const auto text = instantiate(instance, source.id, source.template_text).text;
    const auto values = interpreter.interpret(instance, text);
    if (values.size() != interpreter.dim()) {
      throw DataError("interpreter returned " + std::to_string(values.size()) + " values for \"" + source.id +
                      "\", expected " + std::to_string(interpreter.dim()));
    }
    out.blocks.push_back({source.id, out.values.size(), values.size()});
    out.values.insert(out.values.end(), values.begin(), values.end());
  }
  return out;
}

BlockVector build_u(const Instance& instance, const LabelSpace& labels, const Interpreter& interpreter) {
  const auto sources = label_sources(labels);
  return interpret_sources(instance, sources, interpreter);
}

BlockVector build_v(const Instance& instance, std::span<const Explanation> explanations,
                    const Interpreter& interpreter) {
  const auto sources = explanation_sources(explanations);
  return interpret_sources(instance, sources, interpreter);
}

AssembledRepresentation assemble(const BlockVector& u, const BlockVector& v, const BlockVector* extras) {
  if (u.values.empty()) throw DataError("input representation u is empty");
  AssembledRepresentation rep;
  rep.u_length = u.values.size();
  rep.v_length = v.values.size();
  rep.extras_length = extras ? extras->values.size() : 0;
  rep.values.reserve(rep.u_length + rep.v_length + rep.extras_length);
  auto append = [&rep](const BlockVector& part) {
    const auto base = rep.values.size();
    rep.values.insert(rep.values.end(), part.values.begin(), part.values.end());
    for (const auto& block : part.blocks) rep.layout.push_back({block.source_id, base + block.offset, block.length});
  };
  append(u);
  append(v);
  if (extras) append(*extras);
  check_layout(rep.layout, rep.values.size());
  return rep;
}

void check_layout(std::span<const Block> layout, std::size_t total) {
  std::size_t expected = 0;
  for (const auto& block : layout) {
    if (block.offset != expected) {
      throw DataError("layout block \"" + block.source_id + "\" starts at " + std::to_string(block.offset) +
                      ", expected " + std::to_string(expected));
    }
    expected += block.length;
  }
  if (expected != total) {
    throw DataError("layout covers " + std::to_string(expected) + " values, representation has " +
                    std::to_string(total));
  }
}

AssembledRepresentation drop_sources(const AssembledRepresentation& rep, std::span<const std::string> source_ids) {
  const std::unordered_set<std::string> drop(source_ids.begin(), source_ids.end());
  AssembledRepresentation out;
  for (const auto& block : rep.layout) {
    if (drop.contains(block.source_id)) continue;
    out.layout.push_back({block.source_id, out.values.size(), block.length});
    const auto first = rep.values.begin() + static_cast<std::ptrdiff_t>(block.offset);
    out.values.insert(out.values.end(), first, first + static_cast<std::ptrdiff_t>(block.length));
    if (block.offset < rep.u_length) {
      out.u_length += block.length;
    } else if (block.offset < rep.u_length + rep.v_length) {
      out.v_length += block.length;
    } else {
      out.extras_length += block.length;
    }
  }
  return out;
}

AssembledRepresentation mask_sources(const AssembledRepresentation& rep, std::span<const std::string> source_ids) {
  const std::unordered_set<std::string> mask(source_ids.begin(), source_ids.end());
  AssembledRepresentation out = rep;
  for (const auto& block : rep.layout) {
    if (!mask.contains(block.source_id)) continue;
    std::fill_n(out.values.begin() + static_cast<std::ptrdiff_t>(block.offset), block.length, 0.0f);
  }
  return out;
}

AssembledRepresentation build_representation(const FeaturePlan& plan, const Instance& instance) {
  if (plan.u_interpreter == nullptr) throw ConfigError("feature plan has no input interpreter");
  const auto u = interpret_sources(instance, plan.u_sources, *plan.u_interpreter);
  BlockVector v;
  if (!plan.v_sources.empty()) {
    if (plan.v_interpreter == nullptr) throw ConfigError("feature plan has explanations but no interpreter");
    v = interpret_sources(instance, plan.v_sources, *plan.v_interpreter);
  }
  if (plan.extra_sources.empty()) return assemble(u, v);
  if (plan.extra_interpreter == nullptr) throw ConfigError("feature plan has extras but no interpreter");
  const auto extras = interpret_sources(instance, plan.extra_sources, *plan.extra_interpreter);
  return assemble(u, v, &extras);
}

std::vector<Block> plan_layout(const FeaturePlan& plan) {
  std::vector<Block> layout;
  std::size_t offset = 0;
  auto add = [&](const std::vector<TextSource>& sources, const Interpreter* interpreter) {
    if (sources.empty()) return;
    if (interpreter == nullptr) throw ConfigError("feature plan has sources but no interpreter");
    for (const auto& source : sources) {
      layout.push_back({source.id, offset, interpreter->dim()});
      offset += interpreter->dim();
    }
  };
  add(plan.u_sources, plan.u_interpreter);
  add(plan.v_sources, plan.v_interpreter);
  add(plan.extra_sources, plan.extra_interpreter);
  return layout;
}

FeatureMatrix build_feature_matrix(const FeaturePlan& plan, const std::vector<Instance>& instances) {
  FeatureMatrix out;
  out.layout = plan_layout(plan);
  const std::size_t width = out.layout.empty() ? 0 : out.layout.back().offset + out.layout.back().length;
  out.x = Matrix(instances.size(), width);
  for (std::size_t r = 0; r < instances.size(); ++r) {
    auto rep = build_representation(plan, instances[r]);
    if (rep.layout != out.layout) {
      throw DataError("representation of \"" + instances[r].id + "\" does not match the planned layout");
    }
    std::copy(rep.values.begin(), rep.values.end(), out.x.row(r).begin());
    out.labels.push_back(instances[r].gold.value_or(-1));
    out.ids.push_back(instances[r].id);
  }
  return out;
}

}  // namespace expbert
