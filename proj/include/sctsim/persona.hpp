#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace sctsim {

using Json = nlohmann::json;
using Embedding = std::vector<double>;

inline constexpr std::size_t kEmbeddingDim = 1024;

// ---------------------------------------------------------------------------
// Personal-factor categories

enum class Category { Cognitive, Motivational, Biological, Affective };

inline constexpr std::array<Category, 4> kAllCategories = {
    Category::Cognitive, Category::Motivational, Category::Biological,
    Category::Affective};

constexpr std::string_view to_string(Category c) noexcept {
  switch (c) {
    case Category::Cognitive: return "Cognitive";
    case Category::Motivational: return "Motivational";
    case Category::Biological: return "Biological";
    case Category::Affective: return "Affective";
  }
  return "?";
}

/// Total over the four canonical spellings; nullopt for anything else.
constexpr std::optional<Category> parse_category(std::string_view s) noexcept {
  for (Category c : kAllCategories)
    if (to_string(c) == s) return c;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// SCT constructs

enum class Construct {
  SelfEfficacy,
  BehavioralCapability,
  Expectations,
  SelfRegulation,
  ObservationalLearning,
  Reinforcements
};

inline constexpr std::size_t kConstructCount = 6;

inline constexpr std::array<Construct, kConstructCount> kAllConstructs = {
    Construct::SelfEfficacy,          Construct::BehavioralCapability,
    Construct::Expectations,          Construct::SelfRegulation,
    Construct::ObservationalLearning, Construct::Reinforcements};

/// Column order of the regression design, X2..X7.
inline constexpr std::array<Construct, kConstructCount> kDesignOrder = {
    Construct::Reinforcements,       Construct::ObservationalLearning,
    Construct::Expectations,         Construct::SelfRegulation,
    Construct::BehavioralCapability, Construct::SelfEfficacy};

constexpr std::string_view to_string(Construct c) noexcept {
  switch (c) {
    case Construct::SelfEfficacy: return "self_efficacy";
    case Construct::BehavioralCapability: return "behavioral_capability";
    case Construct::Expectations: return "expectations";
    case Construct::SelfRegulation: return "self_regulation";
    case Construct::ObservationalLearning: return "observational_learning";
    case Construct::Reinforcements: return "reinforcements";
  }
  return "?";
}

constexpr std::string_view display_name(Construct c) noexcept {
  switch (c) {
    case Construct::SelfEfficacy: return "Self-efficacy";
    case Construct::BehavioralCapability: return "Behavioral capability";
    case Construct::Expectations: return "Expectations";
    case Construct::SelfRegulation: return "Self-regulation";
    case Construct::ObservationalLearning: return "Observational learning";
    case Construct::Reinforcements: return "Reinforcements";
  }
  return "?";
}

constexpr std::optional<Construct> parse_construct(std::string_view s) noexcept {
  for (Construct c : kAllConstructs)
    if (to_string(c) == s) return c;
  return std::nullopt;
}

constexpr std::size_t index_of(Construct c) noexcept { return static_cast<std::size_t>(c); }

inline constexpr double kConstructMin = 0.1;
inline constexpr double kConstructMax = 1.0;
inline constexpr double kConstructDefault = 0.5;

/// Expression level of the six constructs on the 0.1-1.0 scale.
class SctConstructVector {
 public:
  constexpr SctConstructVector() noexcept { values_.fill(kConstructDefault); }
  explicit constexpr SctConstructVector(std::array<double, kConstructCount> v) noexcept
      : values_(v) {}

  static constexpr SctConstructVector uniform(double v) noexcept {
    std::array<double, kConstructCount> a{};
    a.fill(v);
    return SctConstructVector(a);
  }

  constexpr double operator[](Construct c) const noexcept { return values_[index_of(c)]; }
  constexpr double& operator[](Construct c) noexcept { return values_[index_of(c)]; }
  constexpr const std::array<double, kConstructCount>& values() const noexcept {
    return values_;
  }

  bool operator==(const SctConstructVector&) const = default;

 private:
  std::array<double, kConstructCount> values_{};
};

struct ConstructViolation {
  Construct construct;
  double value;
  bool operator==(const ConstructViolation&) const = default;
};

/// Every component outside [0.1, 1.0], in construct order. Empty means valid.
inline std::vector<ConstructViolation> validate_construct_vector(const SctConstructVector& v) {
  std::vector<ConstructViolation> out;
  for (Construct c : kAllConstructs) {
    const double x = v[c];
    if (!(x >= kConstructMin && x <= kConstructMax)) out.push_back({c, x});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Profiles and factors

struct AgentProfile {
  std::string agent_id;
  std::string name;
  int age = 0;
  std::string job_title;
  std::string ideology;
  std::string physical_characteristics;
  std::string personality;
  std::string background;
  std::string job_duties;
  std::string hobbies;
  std::string concerns;

  bool operator==(const AgentProfile&) const = default;
};

struct PersonalFactor {
  std::string question_id;
  Category category = Category::Cognitive;
  std::string dimension;
  std::string question;
  std::string answer;
  std::optional<Embedding> embedding;

  bool operator==(const PersonalFactor&) const = default;
};

class DatasetError : public std::runtime_error {
 public:
  enum class Kind { MissingFile, MalformedJson, UnknownCategory, DuplicateQuestionId, InvalidRecord };

  DatasetError(Kind kind, std::string record, const std::string& message)
      : std::runtime_error(message), kind_(kind), record_(std::move(record)) {}

  Kind kind() const noexcept { return kind_; }
  /// The offending record: a path, a question_id, a category string or a field name.
  const std::string& record() const noexcept { return record_; }

 private:
  Kind kind_;
  std::string record_;
};

struct PersonaDataset {
  AgentProfile profile;
  std::vector<PersonalFactor> factors;
  std::vector<std::string> warnings;

  /// Factor indices per category; every factor appears exactly once.
  std::map<Category, std::vector<std::size_t>> category_index() const {
    std::map<Category, std::vector<std::size_t>> idx;
    for (std::size_t i = 0; i < factors.size(); ++i) idx[factors[i].category].push_back(i);
    return idx;
  }

  std::map<Category, std::size_t> category_counts() const {
    std::map<Category, std::size_t> counts;
    for (Category c : kAllCategories) counts[c] = 0;
    for (const auto& f : factors) ++counts[f.category];
    return counts;
  }
};

namespace detail {

inline std::string required_string(const Json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string())
    throw DatasetError(DatasetError::Kind::InvalidRecord, where + "." + key,
                       "missing or non-string field '" + std::string(key) + "' in " + where);
  std::string v = it->get<std::string>();
  if (v.empty())
    throw DatasetError(DatasetError::Kind::InvalidRecord, where + "." + key,
                       "empty field '" + std::string(key) + "' in " + where);
  return v;
}

}  // namespace detail

inline AgentProfile profile_from_json(const Json& j) {
  if (!j.is_object())
    throw DatasetError(DatasetError::Kind::InvalidRecord, "profile", "profile must be an object");
  AgentProfile p;
  const std::string where = "profile";
  p.agent_id = detail::required_string(j, "agent_id", where);
  p.name = detail::required_string(j, "name", where);
  auto age = j.find("age");
  if (age == j.end() || !age->is_number_integer())
    throw DatasetError(DatasetError::Kind::InvalidRecord, "profile.age",
                       "missing or non-integer field 'age' in profile");
  p.age = age->get<int>();
  p.job_title = detail::required_string(j, "job_title", where);
  p.ideology = detail::required_string(j, "ideology", where);
  p.physical_characteristics = detail::required_string(j, "physical_characteristics", where);
  p.personality = detail::required_string(j, "personality", where);
  p.background = detail::required_string(j, "background", where);
  p.job_duties = detail::required_string(j, "job_duties", where);
  p.hobbies = detail::required_string(j, "hobbies", where);
  p.concerns = detail::required_string(j, "concerns", where);
  return p;
}

inline Json to_json(const AgentProfile& p) {
  return Json{{"agent_id", p.agent_id},
              {"name", p.name},
              {"age", p.age},
              {"job_title", p.job_title},
              {"ideology", p.ideology},
              {"physical_characteristics", p.physical_characteristics},
              {"personality", p.personality},
              {"background", p.background},
              {"job_duties", p.job_duties},
              {"hobbies", p.hobbies},
              {"concerns", p.concerns}};
}

/// Parses an already-decoded dataset document. `source` names the file in errors.
inline PersonaDataset persona_dataset_from_json(const Json& doc, const std::string& source = "<memory>") {
  if (!doc.is_object() || !doc.contains("profile") || !doc.contains("factors") ||
      !doc["factors"].is_array())
    throw DatasetError(DatasetError::Kind::InvalidRecord, source,
                       source + ": expected top-level 'profile' object and 'factors' array");
  PersonaDataset ds;
  ds.profile = profile_from_json(doc["profile"]);

  std::set<std::string> seen;
  std::size_t i = 0;
  for (const auto& rec : doc["factors"]) {
    const std::string where = "factors[" + std::to_string(i++) + "]";
    if (!rec.is_object())
      throw DatasetError(DatasetError::Kind::InvalidRecord, where, where + " is not an object");
    PersonalFactor f;
    f.question_id = detail::required_string(rec, "question_id", where);
    const std::string cat = detail::required_string(rec, "category", f.question_id);
    auto parsed = parse_category(cat);
    if (!parsed)
      throw DatasetError(DatasetError::Kind::UnknownCategory, cat,
                         "UnknownCategory(\"" + cat + "\") in record " + f.question_id);
    f.category = *parsed;
    f.dimension = detail::required_string(rec, "dimension", f.question_id);
    f.question = detail::required_string(rec, "question", f.question_id);
    f.answer = detail::required_string(rec, "answer", f.question_id);
    if (!seen.insert(f.question_id).second)
      throw DatasetError(DatasetError::Kind::DuplicateQuestionId, f.question_id,
                         "DuplicateQuestionId(\"" + f.question_id + "\") in " + source);
    ds.factors.push_back(std::move(f));
  }
  if (ds.factors.empty())
    ds.warnings.push_back(source + ": dataset for agent '" + ds.profile.agent_id +
                          "' contains no factors");
  return ds;
}

inline PersonaDataset load_persona_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw DatasetError(DatasetError::Kind::MissingFile, path.string(),
                       "cannot open dataset file " + path.string());
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw DatasetError(DatasetError::Kind::MalformedJson, path.string(),
                       path.string() + ": malformed JSON: " + e.what());
  }
  return persona_dataset_from_json(doc, path.string());
}

/// Inverse of persona_dataset_from_json. Embeddings are never written.
inline Json to_json(const PersonaDataset& ds) {
  Json factors = Json::array();
  for (const auto& f : ds.factors)
    factors.push_back(Json{{"question_id", f.question_id},
                           {"category", std::string(to_string(f.category))},
                           {"dimension", f.dimension},
                           {"question", f.question},
                           {"answer", f.answer}});
  return Json{{"profile", to_json(ds.profile)}, {"factors", std::move(factors)}};
}

inline void save_persona_dataset(const PersonaDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json(ds).dump(2) << '\n';
}

/// Loads every *.json file in `dir`, sorted by file name.
inline std::vector<std::filesystem::path> dataset_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw DatasetError(DatasetError::Kind::MissingFile, dir.string(),
                       "dataset directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

// ---------------------------------------------------------------------------
// Vector helpers shared by retrieval and memory

inline double dot(const Embedding& a, const Embedding& b) {
  double s = 0.0;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

inline double l2_norm(const Embedding& a) { return std::sqrt(dot(a, a)); }

inline double cosine(const Embedding& a, const Embedding& b) {
  const double na = l2_norm(a), nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

inline void normalize(Embedding& a) {
  const double n = l2_norm(a);
  if (n > 0.0)
    for (double& x : a) x /= n;
}

}  // namespace sctsim
