#include "paml/tasks/movielens.hpp"

#include <charconv>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string_view>

#include "paml/error.hpp"

namespace paml::tasks {
namespace {

std::vector<std::string_view> split_fields(std::string_view line, std::string_view sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + sep.size();
  }
}

template <class Int>
Int parse_int(std::string_view s, const char* what) {
  Int v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw std::invalid_argument(std::string("bad ") + what + " '" + std::string(s) + "'");
  return v;
}

std::string_view chomp(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> expect_fields(const std::string& line, std::size_t n, const char* kind) {
  auto f = split_fields(chomp(line), "::");
  if (f.size() != n)
    throw std::invalid_argument(std::string(kind) + " line has " + std::to_string(f.size()) + " fields, expected " +
                                std::to_string(n));
  return f;
}

template <class Record, class Parse>
std::vector<Record> read_file(const std::filesystem::path& path, Parse parse, LineStats& stats) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<Record> out;
  std::string line;
  std::size_t lineno = 0;
  std::size_t reported = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (chomp(line).empty()) continue;
    ++stats.total;
    try {
      out.push_back(parse(line));
    } catch (const std::invalid_argument& e) {
      ++stats.skipped;
      if (reported++ < 10) std::cerr << "warning: " << path.string() << ":" << lineno << ": skipped (" << e.what() << ")\n";
    }
  }
  if (stats.total > 0 && stats.skipped * 100 > stats.total)
    throw DataError(path.string() + ": " + std::to_string(stats.skipped) + " of " + std::to_string(stats.total) +
                    " lines unparseable (more than 1%)");
  return out;
}

}  // namespace

MovieLensUser parse_user_line(const std::string& line) {
  const auto f = expect_fields(line, 5, "user");
  MovieLensUser u;
  u.user_id = parse_int<int>(f[0], "user id");
  u.gender = std::string(f[1]);
  u.age = parse_int<int>(f[2], "age");
  u.occupation = parse_int<int>(f[3], "occupation");
  u.zip = std::string(f[4]);
  return u;
}

MovieLensMovie parse_movie_line(const std::string& line) {
  const auto f = expect_fields(line, 3, "movie");
  MovieLensMovie m;
  m.movie_id = parse_int<int>(f[0], "movie id");
  m.title = std::string(f[1]);
  if (!f[2].empty())
    for (std::string_view g : split_fields(f[2], "|")) m.genres.emplace_back(g);
  return m;
}

MovieLensRating parse_rating_line(const std::string& line) {
  const auto f = expect_fields(line, 4, "rating");
  MovieLensRating r;
  r.user_id = parse_int<int>(f[0], "user id");
  r.movie_id = parse_int<int>(f[1], "movie id");
  r.rating = parse_int<int>(f[2], "rating");
  if (r.rating < 1 || r.rating > 5) throw std::invalid_argument("rating outside 1..5");
  r.timestamp = parse_int<std::int64_t>(f[3], "timestamp");
  return r;
}

MovieLensRaw load_movielens(const std::filesystem::path& ratings, const std::filesystem::path& users,
                            const std::filesystem::path& movies) {
  MovieLensRaw raw;
  raw.users = read_file<MovieLensUser>(users, parse_user_line, raw.user_lines);
  raw.movies = read_file<MovieLensMovie>(movies, parse_movie_line, raw.movie_lines);
  raw.ratings = read_file<MovieLensRating>(ratings, parse_rating_line, raw.rating_lines);
  if (raw.ratings.empty()) throw DataError(ratings.string() + ": no ratings");
  if (raw.users.empty()) throw DataError(users.string() + ": no users");
  if (raw.movies.empty()) throw DataError(movies.string() + ": no movies");
  return raw;
}

}  // namespace paml::tasks
