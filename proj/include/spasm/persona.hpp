#pragma once

// Persona schema sampling, LLM plausibility validation and crafting of the
// natural-language persona card.

#include <array>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "spasm/backend.hpp"
#include "spasm/error.hpp"
#include "spasm/prompts.hpp"

namespace spasm {

enum class Intensity { mild, moderate, severe };
enum class Level { low, medium, high };
enum class Politeness { formal, neutral, casual, blunt };

inline constexpr std::string_view to_string(Intensity v) {
  constexpr std::array<std::string_view, 3> n{"mild", "moderate", "severe"};
  return n[static_cast<std::size_t>(v)];
}
inline constexpr std::string_view to_string(Level v) {
  constexpr std::array<std::string_view, 3> n{"low", "medium", "high"};
  return n[static_cast<std::size_t>(v)];
}
inline constexpr std::string_view to_string(Politeness v) {
  constexpr std::array<std::string_view, 4> n{"formal", "neutral", "casual", "blunt"};
  return n[static_cast<std::size_t>(v)];
}

template <typename E>
E parse_enum(std::string_view s, std::initializer_list<E> values) {
  for (E v : values)
    if (to_string(v) == s) return v;
  throw FormatError("unknown enum value '" + std::string(s) + "'");
}

inline Intensity parse_intensity(std::string_view s) {
  return parse_enum(s, {Intensity::mild, Intensity::moderate, Intensity::severe});
}
inline Level parse_level(std::string_view s) {
  return parse_enum(s, {Level::low, Level::medium, Level::high});
}
inline Politeness parse_politeness(std::string_view s) {
  return parse_enum(s, {Politeness::formal, Politeness::neutral, Politeness::casual,
                        Politeness::blunt});
}

inline constexpr std::string_view kUnspecifiedGender = "unspecified";

struct PersonaSchema {
  int age_min = 18;
  int age_max = 65;
  std::vector<std::string> occupations;
  std::vector<std::string> locations;
  std::vector<std::string> domains;
  std::vector<std::string> emotions;
  std::vector<Intensity> intensities{Intensity::mild, Intensity::moderate, Intensity::severe};
  std::vector<Level> expressiveness{Level::low, Level::medium, Level::high};
  std::vector<Level> self_disclosure{Level::low, Level::medium, Level::high};
  std::vector<Level> assertiveness{Level::low, Level::medium, Level::high};
  std::vector<Politeness> politeness_styles{Politeness::formal, Politeness::neutral,
                                            Politeness::casual, Politeness::blunt};
  // Not part of the sampled field set unless populated.
  std::vector<std::string> genders;

  void validate() const {
    if (age_min > age_max) throw SchemaError("empty age interval");
    auto need = [](bool nonempty, const char* what) {
      if (!nonempty) throw SchemaError(std::string("empty value set: ") + what);
    };
    need(!occupations.empty(), "occupations");
    need(!locations.empty(), "locations");
    need(!domains.empty(), "domains");
    need(!emotions.empty(), "emotions");
    need(!intensities.empty(), "intensities");
    need(!expressiveness.empty(), "expressiveness");
    need(!self_disclosure.empty(), "self_disclosure");
    need(!assertiveness.empty(), "assertiveness");
    need(!politeness_styles.empty(), "politeness_styles");
  }
};

struct PersonaProfile {
  std::string persona_id;
  int age = 0;
  std::string gender{kUnspecifiedGender};
  std::string occupation;
  std::string location;
  std::string domain;
  std::string emotion;
  Intensity intensity = Intensity::mild;
  Level expressiveness = Level::medium;
  Level self_disclosure = Level::medium;
  Level assertiveness = Level::medium;
  Politeness politeness_style = Politeness::neutral;

  bool operator==(const PersonaProfile&) const = default;
};

// Sampled fields only; the id is bookkeeping and never shown to a model.
inline json profile_fields_json(const PersonaProfile& p) {
  json j{{"age", p.age},
         {"occupation", p.occupation},
         {"location", p.location},
         {"domain", p.domain},
         {"emotion", p.emotion},
         {"intensity", to_string(p.intensity)},
         {"expressiveness", to_string(p.expressiveness)},
         {"self_disclosure", to_string(p.self_disclosure)},
         {"assertiveness", to_string(p.assertiveness)},
         {"politeness_style", to_string(p.politeness_style)}};
  if (p.gender != kUnspecifiedGender) j["gender"] = p.gender;
  return j;
}

inline void to_json(json& j, const PersonaProfile& p) {
  j = profile_fields_json(p);
  j["persona_id"] = p.persona_id;
  j["gender"] = p.gender;
}

inline void from_json(const json& j, PersonaProfile& p) {
  p.persona_id = j.value("persona_id", std::string{});
  p.age = j.at("age").get<int>();
  p.gender = j.value("gender", std::string(kUnspecifiedGender));
  p.occupation = j.at("occupation").get<std::string>();
  p.location = j.at("location").get<std::string>();
  p.domain = j.at("domain").get<std::string>();
  p.emotion = j.at("emotion").get<std::string>();
  p.intensity = parse_intensity(j.at("intensity").get<std::string>());
  p.expressiveness = parse_level(j.at("expressiveness").get<std::string>());
  p.self_disclosure = parse_level(j.at("self_disclosure").get<std::string>());
  p.assertiveness = parse_level(j.at("assertiveness").get<std::string>());
  p.politeness_style = parse_politeness(j.at("politeness_style").get<std::string>());
}

struct PersonaDescription {
  PersonaProfile profile;
  std::string text;

  bool operator==(const PersonaDescription&) const = default;
};

inline bool schema_contains(const PersonaSchema& s, const PersonaProfile& p) {
  auto in = [](const auto& set, const auto& v) {
    return std::find(set.begin(), set.end(), v) != set.end();
  };
  const bool gender_ok =
      s.genders.empty() ? p.gender == kUnspecifiedGender : in(s.genders, p.gender);
  return p.age >= s.age_min && p.age <= s.age_max && in(s.occupations, p.occupation) &&
         in(s.locations, p.location) && in(s.domains, p.domain) && in(s.emotions, p.emotion) &&
         in(s.intensities, p.intensity) && in(s.expressiveness, p.expressiveness) &&
         in(s.self_disclosure, p.self_disclosure) && in(s.assertiveness, p.assertiveness) &&
         in(s.politeness_styles, p.politeness_style) && gender_ok;
}

// One independent uniform draw per field. The draw order is part of the
// reproducibility contract: do not reorder.
template <typename Rng>
PersonaProfile sample_profile(const PersonaSchema& schema, Rng& rng) {
  schema.validate();
  auto pick = [&rng](const auto& values) -> const auto& {
    std::uniform_int_distribution<std::size_t> d(0, values.size() - 1);
    return values[d(rng)];
  };
  PersonaProfile p;
  p.age = std::uniform_int_distribution<int>(schema.age_min, schema.age_max)(rng);
  p.occupation = pick(schema.occupations);
  p.location = pick(schema.locations);
  p.domain = pick(schema.domains);
  p.emotion = pick(schema.emotions);
  p.intensity = pick(schema.intensities);
  p.expressiveness = pick(schema.expressiveness);
  p.self_disclosure = pick(schema.self_disclosure);
  p.assertiveness = pick(schema.assertiveness);
  p.politeness_style = pick(schema.politeness_styles);
  if (!schema.genders.empty()) p.gender = pick(schema.genders);
  return p;
}

inline GenerationConfig validator_defaults(std::string model_id) {
  return {std::move(model_id), 0.3, 64, std::string(prompts::kPersonaValidator), {}};
}

inline GenerationConfig crafter_defaults(std::string model_id) {
  return {std::move(model_id), 0.7, 400, std::string(prompts::kPersonaCrafter), {}};
}

inline std::vector<ChatMessage> validator_messages(const PersonaProfile& profile,
                                                   const GenerationConfig& config) {
  return {{MessageRole::system, config.system_prompt},
          {MessageRole::user, "Persona:\n" + profile_fields_json(profile).dump(2)}};
}

inline std::vector<ChatMessage> crafter_messages(const PersonaProfile& profile,
                                                 const GenerationConfig& config) {
  return {{MessageRole::system, config.system_prompt},
          {MessageRole::user, "Persona fields:\n" + profile_fields_json(profile).dump(2)}};
}

// Unparseable verdicts (after one re-ask) count as a rejection.
inline bool validate_profile(ChatBackend& backend, const PersonaProfile& profile,
                             const GenerationConfig& config) {
  const auto messages = validator_messages(profile, config);
  try {
    const json verdict = structured_with_retry(backend, config, messages, {"valid"});
    return verdict_bool(verdict, "valid");
  } catch (const MalformedVerdict&) {
    return false;
  }
}

struct ValidatedProfile {
  PersonaProfile profile;
  int attempts = 0;
};

template <typename Rng>
ValidatedProfile resample_until_valid(ChatBackend& backend, const PersonaSchema& schema,
                                      const GenerationConfig& validator_config, Rng& rng,
                                      int max_attempts = 20) {
  if (max_attempts < 1) throw std::invalid_argument("max_attempts must be >= 1");
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    PersonaProfile candidate = sample_profile(schema, rng);
    if (validate_profile(backend, candidate, validator_config)) return {candidate, attempt};
  }
  throw PersonaExhausted("no valid persona after " + std::to_string(max_attempts) +
                         " attempts");
}

namespace detail {
inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}
} // namespace detail

inline constexpr std::string_view kCrafterRetryNudge =
    "Rewrite the description so that it starts with \"You are\" and addresses the persona "
    "in the second person.";

inline PersonaDescription craft_description(ChatBackend& backend, const PersonaProfile& profile,
                                            const GenerationConfig& config) {
  auto messages = crafter_messages(profile, config);
  std::string text = detail::trim(chat_complete(backend, config, messages));
  if (!text.starts_with("You are")) {
    messages.push_back({MessageRole::assistant, text});
    messages.push_back({MessageRole::user, std::string(kCrafterRetryNudge)});
    text = detail::trim(chat_complete(backend, config, messages));
    if (!text.starts_with("You are"))
      throw CraftingContractViolation("crafted description does not start with \"You are\": " +
                                      text.substr(0, 80));
  }
  return {profile, std::move(text)};
}

namespace detail {
inline std::vector<std::string> read_value_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot read " + path.string());
  std::vector<std::string> values;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    values.push_back(line);
  }
  return values;
}
} // namespace detail

// Loads the free-text value sets from `dir` (one value per line, '#'
// comments). The ordinal fields keep their fixed defaults. Optional files:
// genders.txt, age_range.txt ("<min> <max>").
inline PersonaSchema load_schema(const std::filesystem::path& dir) {
  PersonaSchema s;
  s.occupations = detail::read_value_list(dir / "occupations.txt");
  s.locations = detail::read_value_list(dir / "locations.txt");
  s.domains = detail::read_value_list(dir / "domains.txt");
  s.emotions = detail::read_value_list(dir / "emotions.txt");
  if (std::filesystem::exists(dir / "genders.txt"))
    s.genders = detail::read_value_list(dir / "genders.txt");
  if (std::filesystem::exists(dir / "age_range.txt")) {
    std::ifstream in(dir / "age_range.txt");
    if (!(in >> s.age_min >> s.age_max)) throw SchemaError("malformed age_range.txt");
  }
  s.validate();
  return s;
}

} // namespace spasm
