#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace woundcare::care {

/// Screens that show the question-mark help icon.
enum class Screen {
  home,
  wound_localization,
  photo_capture,
  photo_confirmation,
  wound_questionnaire,
  general_questionnaire,
  summary,
  gallery,
  wound_trajectory,
  general_trajectory,
  appointments,
  video_call,
  patient_overview,
};

std::string_view to_string(Screen s);
std::vector<Screen> all_screens();

struct HelpEntry {
  std::string screen;
  std::string locale;
  std::string text;
  bool audio_available = false;
};

inline constexpr std::string_view default_locale = "en";

/// Unknown screen ids are ErrorCode::not_found; unknown locales fall back to "en".
HelpEntry help_text(std::string_view screen_id, std::string_view locale = default_locale);

}  // namespace woundcare::care
