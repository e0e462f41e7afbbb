#pragma once

#include <stdexcept>
#include <string>

namespace chartmark {

// Base of every domain failure raised by the library. The CLI maps these to
// exit code 1; anything else escaping is a bug.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define CHARTMARK_ERROR(Name)                  \
  class Name : public Error {                   \
   public:                                      \
    using Error::Error;                         \
  }

// chart_spec
CHARTMARK_ERROR(SyntaxError);
CHARTMARK_ERROR(ValidationError);
CHARTMARK_ERROR(ConfigError);
// renderer
CHARTMARK_ERROR(LayoutError);
// cot
CHARTMARK_ERROR(FormatError);
CHARTMARK_ERROR(IntegrityError);
// marker
CHARTMARK_ERROR(TargetError);
CHARTMARK_ERROR(CollisionError);
CHARTMARK_ERROR(NotFoundError);
CHARTMARK_ERROR(AmbiguousError);
// bbox
CHARTMARK_ERROR(ParseError);
// instruction
CHARTMARK_ERROR(CoverageError);
// pipeline
CHARTMARK_ERROR(IoError);
CHARTMARK_ERROR(EmptyError);
CHARTMARK_ERROR(RenderError);
// eval
CHARTMARK_ERROR(ExtractionError);
CHARTMARK_ERROR(MissingGoldError);
// llm_client
CHARTMARK_ERROR(ClientError);

#undef CHARTMARK_ERROR

}  // namespace chartmark
