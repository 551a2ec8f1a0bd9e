#include "rarforge/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "rarforge/rng.hpp"
#include "rarforge/text.hpp"

namespace rarforge {
namespace {

using nlohmann::json;

void warn_unknown_fields(const json& object, const std::set<std::string>& known,
                         const std::string& where) {
  static std::set<std::string> warned;
  for (const auto& [key, value] : object.items()) {
    (void)value;
    if (known.count(key)) continue;
    const std::string tag = where + ":" + key;
    if (warned.insert(tag).second) {
      std::cerr << "warning: ignoring unknown field \"" << key << "\" in " << where << " record\n";
    }
  }
}

TrainingInstance instance_from_json(const json& record) {
  TrainingInstance inst;
  warn_unknown_fields(record, {"id", "question", "narrative", "aspects", "profile", "category"},
                      "instance");
  inst.id = record.at("id").get<std::string>();
  inst.question = record.at("question").get<std::string>();
  inst.narrative = record.value("narrative", std::string{});
  if (record.contains("category")) inst.category = record.at("category").get<std::string>();
  for (const auto& a : record.at("aspects")) {
    warn_unknown_fields(a, {"id", "text", "keyphrases"}, "aspect");
    RubricAspect aspect;
    aspect.id = a.at("id").get<std::string>();
    aspect.text = a.at("text").get<std::string>();
    for (const auto& k : a.at("keyphrases")) aspect.keyphrases.push_back(k.get<std::string>());
    inst.aspects.push_back(std::move(aspect));
  }
  const json& profile = record.at("profile");
  warn_unknown_fields(profile, {"user_id", "documents"}, "profile");
  inst.profile.user_id = profile.at("user_id").get<std::string>();
  for (const auto& d : profile.at("documents")) {
    warn_unknown_fields(d, {"id", "text"}, "document");
    inst.profile.documents.push_back({d.at("id").get<std::string>(), d.at("text").get<std::string>()});
  }
  return inst;
}

json instance_to_json(const TrainingInstance& inst) {
  json aspects = json::array();
  for (const auto& a : inst.aspects) {
    aspects.push_back({{"id", a.id}, {"text", a.text}, {"keyphrases", a.keyphrases}});
  }
  json documents = json::array();
  for (const auto& d : inst.profile.documents) {
    documents.push_back({{"id", d.id}, {"text", d.text}});
  }
  json record = {{"id", inst.id},
                 {"question", inst.question},
                 {"narrative", inst.narrative},
                 {"aspects", aspects},
                 {"profile", {{"user_id", inst.profile.user_id}, {"documents", documents}}}};
  if (inst.category) record["category"] = *inst.category;
  return record;
}

}  // namespace

std::vector<AttributeSpec> default_attribute_schema() {
  return {
      {"occupation", {"florist", "geologist", "barista", "archivist", "beekeeper", "locksmith"}},
      {"hobby", {"chess", "birdwatching", "pottery", "kayaking", "calligraphy", "astronomy"}},
      {"diet", {"vegan", "pescatarian", "keto", "halal", "kosher", "omnivore"}},
      {"city", {"lisbon", "tromso", "osaka", "cusco", "tallinn", "windhoek"}},
      {"pet", {"ferret", "parrot", "gecko", "husky", "tortoise", "axolotl"}},
      {"genre", {"nonfiction", "horror", "westerns", "biographies", "satire", "poetry"}},
  };
}

void validate_instance(const TrainingInstance& instance) {
  const auto fail = [&](const std::string& what) {
    throw ValidationError("instance \"" + instance.id + "\": " + what);
  };
  if (instance.id.empty()) throw ValidationError("instance with empty id");
  if (instance.question.empty()) fail("question is empty");
  if (instance.aspects.empty()) fail("aspects is empty");
  for (const auto& aspect : instance.aspects) {
    if (aspect.text.empty()) fail("aspect \"" + aspect.id + "\" has empty text");
  }
  if (instance.profile.documents.empty()) fail("profile has no documents");
  std::unordered_set<std::string> doc_ids;
  for (const auto& doc : instance.profile.documents) {
    if (doc.text.empty()) fail("document \"" + doc.id + "\" has empty text");
    if (!doc_ids.insert(doc.id).second) fail("duplicate document id \"" + doc.id + "\"");
  }
}

std::vector<TrainingInstance> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset file: " + path.string());
  std::vector<TrainingInstance> instances;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError("line " + std::to_string(line_number) + ": " + e.what());
    }
    TrainingInstance inst;
    try {
      inst = instance_from_json(record);
    } catch (const json::exception& e) {
      const std::string id = record.is_object() && record.contains("id") && record["id"].is_string()
                                 ? record["id"].get<std::string>()
                                 : ("<line " + std::to_string(line_number) + ">");
      throw ValidationError("record " + id + ": " + e.what());
    }
    validate_instance(inst);
    instances.push_back(std::move(inst));
  }
  return instances;
}

void save_dataset(const std::filesystem::path& path, const std::vector<TrainingInstance>& instances) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open dataset file for writing: " + path.string());
  for (const auto& inst : instances) {
    out << instance_to_json(inst).dump() << '\n';
  }
}

std::vector<TrainingInstance> generate_synthetic(const SyntheticWorldConfig& config) {
  const std::vector<AttributeSpec> schema =
      config.attribute_schema.empty() ? default_attribute_schema() : config.attribute_schema;

  if (config.num_users < 1) throw ValidationError("num_users must be positive");
  if (config.attributes_per_user < 1) throw ValidationError("attributes_per_user must be positive");
  if (config.aspects_per_question < 1) throw ValidationError("aspects_per_question must be positive");
  if (config.distractor_docs_per_user < 0) throw ValidationError("distractor_docs_per_user must be non-negative");
  if (config.attributes_per_user > static_cast<int>(schema.size())) {
    throw ValidationError("attributes_per_user exceeds schema size");
  }
  if (config.aspects_per_question > config.attributes_per_user) {
    throw ValidationError("aspects_per_question exceeds attributes_per_user");
  }
  std::unordered_set<std::string> names;
  for (const auto& attr : schema) {
    if (attr.name.empty()) throw ValidationError("attribute with empty name");
    if (attr.values.empty()) throw ValidationError("attribute \"" + attr.name + "\" has empty vocabulary");
    if (!names.insert(attr.name).second) {
      throw ValidationError("duplicate attribute name \"" + attr.name + "\"");
    }
  }

  std::mt19937_64 rng(config.seed);
  std::vector<TrainingInstance> instances;
  instances.reserve(static_cast<std::size_t>(config.num_users));

  for (int u = 0; u < config.num_users; ++u) {
    char suffix[16];
    std::snprintf(suffix, sizeof(suffix), "%04d", u);

    std::vector<std::size_t> attr_order(schema.size());
    for (std::size_t i = 0; i < attr_order.size(); ++i) attr_order[i] = i;
    fisher_yates(attr_order, rng);
    attr_order.resize(static_cast<std::size_t>(config.attributes_per_user));

    struct Assigned {
      std::string name;
      std::string value;
    };
    std::vector<Assigned> assigned;
    for (std::size_t idx : attr_order) {
      const AttributeSpec& attr = schema[idx];
      assigned.push_back({attr.name, attr.values[uniform_index(rng, attr.values.size())]});
    }

    std::vector<std::string> doc_texts;
    for (const auto& a : assigned) {
      doc_texts.push_back("My " + a.name + ": " + a.value + ".");
    }
    for (int d = 0; d < config.distractor_docs_per_user; ++d) {
      const AttributeSpec& decoy = schema[uniform_index(rng, schema.size())];
      doc_texts.push_back("My earlier question about " + decoy.name +
                          " led nowhere in particular.");
    }
    // Shuffled so that a useless query cannot reach the attribute documents
    // through the position tie-break.
    fisher_yates(doc_texts, rng);

    TrainingInstance inst;
    inst.id = std::string("inst-") + suffix;
    inst.profile.user_id = std::string("user-") + suffix;
    for (std::size_t d = 0; d < doc_texts.size(); ++d) {
      inst.profile.documents.push_back(
          {inst.profile.user_id + "-d" + std::to_string(d), doc_texts[d]});
    }

    std::vector<std::string> aspect_names;
    for (int a = 0; a < config.aspects_per_question; ++a) {
      const Assigned& attr = assigned[static_cast<std::size_t>(a)];
      RubricAspect aspect;
      aspect.id = "a" + std::to_string(a);
      aspect.text = attr.name;
      aspect.keyphrases = {attr.value};
      inst.aspects.push_back(std::move(aspect));
      aspect_names.push_back(attr.name);
    }
    const std::string name_list = join(aspect_names, " and ");
    inst.question =
        "Planning ahead for next season, what would suit someone with my " + name_list + "?";
    inst.narrative = "An answer tuned to my " + name_list + " matters to me.";
    instances.push_back(std::move(inst));
  }
  return instances;
}

std::pair<std::vector<TrainingInstance>, std::vector<TrainingInstance>> split(
    const std::vector<TrainingInstance>& instances, double train_fraction, std::uint64_t seed) {
  if (instances.empty()) throw ValidationError("cannot split an empty dataset");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ValidationError("train_fraction must be in (0, 1)");
  }
  std::vector<std::size_t> order(instances.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  fisher_yates(order, rng);

  const auto n = instances.size();
  auto train_count = static_cast<std::size_t>(
      std::floor(static_cast<double>(n) * train_fraction));
  if (train_count > n - 1) train_count = n - 1;  // at least one eval instance

  std::pair<std::vector<TrainingInstance>, std::vector<TrainingInstance>> result;
  for (std::size_t i = 0; i < n; ++i) {
    (i < train_count ? result.first : result.second).push_back(instances[order[i]]);
  }
  return result;
}

}  // namespace rarforge
