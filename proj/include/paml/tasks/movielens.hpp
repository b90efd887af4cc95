#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace paml::tasks {

// Records exactly as they appear in the MovieLens-1M `::`-separated files.
struct MovieLensUser {
  int user_id = 0;
  std::string gender;  // "F" / "M"
  int age = 0;         // bucket code: 1, 18, 25, 35, 45, 50, 56
  int occupation = 0;  // 0..20
  std::string zip;
};

struct MovieLensMovie {
  int movie_id = 0;
  std::string title;  // Latin-1 bytes, untouched
  std::vector<std::string> genres;
};

struct MovieLensRating {
  int user_id = 0;
  int movie_id = 0;
  int rating = 0;
  std::int64_t timestamp = 0;
};

struct LineStats {
  std::size_t total = 0;
  std::size_t skipped = 0;
};

struct MovieLensRaw {
  std::vector<MovieLensUser> users;
  std::vector<MovieLensMovie> movies;
  std::vector<MovieLensRating> ratings;
  LineStats user_lines, movie_lines, rating_lines;
};

/// Parses the three MovieLens-1M files. Malformed lines are skipped and
/// counted; more than 1% skipped in any file is a DataError.
MovieLensRaw load_movielens(const std::filesystem::path& ratings, const std::filesystem::path& users,
                            const std::filesystem::path& movies);

MovieLensUser parse_user_line(const std::string& line);
MovieLensMovie parse_movie_line(const std::string& line);
MovieLensRating parse_rating_line(const std::string& line);

}  // namespace paml::tasks
