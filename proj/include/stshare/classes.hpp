#pragma once

namespace stshare {

// The eight home-cage behaviour classes.
constexpr int kNumClasses = 8;

inline const char* class_name(int id) {
  static const char* names[kNumClasses] = {"drink", "eat",  "groom", "hang",
                                           "micromovement", "rear", "rest", "walk"};
  return (id >= 0 && id < kNumClasses) ? names[id] : "?";
}

}  // namespace stshare
