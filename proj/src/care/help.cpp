#include "woundcare/care/help.hpp"

#include <array>

#include "woundcare/error.hpp"

namespace woundcare::care {
namespace {

struct CatalogRow {
  Screen screen;
  std::string_view id;
  std::string_view text;
  bool audio;
};

constexpr std::array<CatalogRow, 13> catalog = {{
    {Screen::home, "home",
     "Start a new documentation with the large button. Your wounds, trends and appointments are one tap away.", true},
    {Screen::wound_localization, "wound_localization",
     "Tap the body picture where your wound is. Use the turn button to switch between front and back.", true},
    {Screen::photo_capture, "photo_capture",
     "Hold the phone still about 20 cm above the wound. Place the reference sticker next to the wound, then tap the "
     "camera button.",
     true},
    {Screen::photo_confirmation, "photo_confirmation",
     "Check that the photo is sharp and the whole wound is visible. Tap Confirm to keep it or Retake to try again.",
     true},
    {Screen::wound_questionnaire, "wound_questionnaire",
     "Move each slider from 0 (none) to 10 (worst imaginable) for pain, itching and wound fluid.", true},
    {Screen::general_questionnaire, "general_questionnaire",
     "Tell us how you feel overall today. 0 is very bad and 10 is very good.", true},
    {Screen::summary, "summary",
     "Review everything before sending. Tap an entry to change it, then tap Send.", true},
    {Screen::gallery, "gallery",
     "Your wound photos in the order they were taken. Use the arrows to move between photos; the counter shows which "
     "photo you are looking at.",
     true},
    {Screen::wound_trajectory, "wound_trajectory",
     "The chart shows how this wound developed. Tap a day to see its values; the line stays until you tap another "
     "day.",
     false},
    {Screen::general_trajectory, "general_trajectory",
     "The chart shows your mood, daily activity and quality of life over time. Tap a day to see its values.", false},
    {Screen::appointments, "appointments",
     "Green days have free appointments. Pick a time to book it; you can cancel with the Cancel button.", true},
    {Screen::video_call, "video_call",
     "You can join the video call up to 15 minutes before your appointment starts. Tap Join when the button turns "
     "green.",
     true},
    {Screen::patient_overview, "patient_overview",
     "Your conditions, allergies, medications and current wound dressing. Ask your care team to correct anything "
     "that is wrong.",
     false},
}};

}  // namespace

std::string_view to_string(Screen s) {
  for (const auto& row : catalog)
    if (row.screen == s) return row.id;
  return "unknown";
}

std::vector<Screen> all_screens() {
  std::vector<Screen> out;
  for (int i = 0; i <= static_cast<int>(Screen::patient_overview); ++i) out.push_back(static_cast<Screen>(i));
  return out;
}

HelpEntry help_text(std::string_view screen_id, std::string_view locale) {
  (void)locale;
  for (const auto& row : catalog) {
    if (row.id == screen_id) {
      return {std::string(row.id), std::string(default_locale), std::string(row.text), row.audio};
    }
  }
  throw Error(ErrorCode::not_found, "no help for screen \"" + std::string(screen_id) + "\"", "screen");
}

}  // namespace woundcare::care
