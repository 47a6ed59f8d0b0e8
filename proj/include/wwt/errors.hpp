/* Copyright 2026 The WWT Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef WWT_ERRORS_HPP_
#define WWT_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace wwt {

// Every error carries a short machine-parsable class name that the CLI prints
// on failure.
class Error : public std::runtime_error {
 public:
  Error(std::string error_class, const std::string& what)
      : std::runtime_error(what), class_(std::move(error_class)) {}
  const std::string& error_class() const noexcept { return class_; }

 private:
  std::string class_;
};

#define WWT_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                    \
   public:                                                       \
    explicit Name(const std::string& what) : Error(#Name, what) {} \
  };

WWT_DEFINE_ERROR(DimensionError)
WWT_DEFINE_ERROR(NonFiniteError)
WWT_DEFINE_ERROR(GraphError)
WWT_DEFINE_ERROR(FormatError)
WWT_DEFINE_ERROR(ConfigError)
WWT_DEFINE_ERROR(ValueError)
WWT_DEFINE_ERROR(IoError)

#undef WWT_DEFINE_ERROR

}  // namespace wwt

#endif  // WWT_ERRORS_HPP_
