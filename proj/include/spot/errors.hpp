// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace spot {

/// Raised when tensor extents or configuration widths disagree.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// NaN/Inf encountered, or a numerical check failed.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input files and datasets.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Config or header parse failure; carries the 1-based line number.
class ParseError : public DataError {
public:
    ParseError(const std::string& what, int line)
        : DataError(what + " (line " + std::to_string(line) + ")"), line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

} // namespace spot
