#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "spasm/spasm.hpp"

namespace testing_support {

namespace fs = std::filesystem;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& tag = "spasm") {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

private:
  fs::path path_;
};

inline spasm::PersonaSchema small_schema() {
  spasm::PersonaSchema s;
  s.age_min = 30;
  s.age_max = 44;
  s.occupations = {"teacher", "nurse", "software engineer"};
  s.locations = {"Lisbon", "Osaka"};
  s.domains = {"career change", "financial planning"};
  s.emotions = {"anxious", "hopeful"};
  return s;
}

inline spasm::PersonaDescription sample_persona(const std::string& id = "p0001") {
  spasm::PersonaDescription d;
  d.profile.persona_id = id;
  d.profile.age = 34;
  d.profile.occupation = "teacher";
  d.profile.location = "Lisbon";
  d.profile.domain = "financial planning";
  d.profile.emotion = "anxious";
  d.text = "You are a 34-year-old teacher living in Lisbon who feels anxious about money.";
  return d;
}

// Record with the given utterances; speakers alternate starting with the client.
inline spasm::ConversationRecord make_record(const std::string& conv_id, const std::string& persona_id,
                                             const std::vector<std::string>& utterances) {
  spasm::ConversationRecord r;
  r.persona_id = persona_id;
  r.conversation_id = conv_id;
  r.persona = sample_persona(persona_id);
  for (std::size_t i = 0; i < utterances.size(); ++i)
    r.turns.push_back({i + 1, i % 2 == 0 ? spasm::SpeakerId::client() : spasm::SpeakerId::responder(),
                       utterances[i]});
  r.termination_reason = "max_turns";
  r.run_meta.client_model = "mock-client";
  r.run_meta.responder_model = "mock-responder";
  return r;
}

// The illustrative CONCAT case: the client slips into advice at t = 3 and
// into support at t = 13.
inline spasm::ConversationRecord case_study_record() {
  return make_record(
      "case-study", "p-case",
      {"Lately, I've been feeling a bit overwhelmed with financial planning. I know I need to secure my "
       "future, but the options for investments and savings are confusing. How can I simplify this process?",
       "Yeah, it can get complicated fast. Maybe start with the basics, like figuring out your goals or what "
       "you can set aside each month.",
       "Have you thought about creating a budget first? It might help you see where your money is going and "
       "make the process less daunting.",
       "Totally, a budget can be really helpful. Seeing everything laid out makes planning easier.",
       "Absolutely! You've got this. If you ever need to bounce around ideas or just talk it out, I'm here for "
       "you.",
       "Thanks, I appreciate that! It's always good to have someone to chat with about this stuff."});
}

} // namespace testing_support
