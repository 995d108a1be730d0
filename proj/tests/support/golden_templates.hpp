#pragma once

// Golden copies of the two judge prompt templates, retyped independently of
// the library so an accidental edit on either side fails the byte
// comparison. Several lines end in a literal space before the newline.

namespace trace_test {

// Independently retyped golden templates (trailing spaces included).
// clang-format off
inline const char* kGoldenStandard =
"You are an impartial and objective evaluator of user satisfaction in \n"
"conversational AI interactions.\n"
"Your task is to carefully review the following transcript of an interaction \n"
"between a User and an AI Model.\n"
"Based ONLY on this transcript, provide a numerical rating representing the \n"
"User's likely satisfaction with the interaction.\n"
"\n"
"Use the following 1-5 scale:\n"
"1: Very dissatisfied\n"
"2: Somewhat dissatisfied\n"
"3: Neither satisfied nor dissatisfied\n"
"4: Somewhat satisfied\n"
"5: Very satisfied\n"
"\n"
"When making your assessment, consider factors such as:\n"
"- Was the AI Model's response relevant to the User's prompts?\n"
"- Did the AI Model seem to understand the User's intent?\n"
"- Was the User likely to achieve their goal by the end of the interaction?\n"
"- Was the interaction efficient, or did the User have to struggle?\n"
"- Was the AI Model polite and the tone appropriate?\n"
"\n"
"Your response MUST be a single integer from 1 to 5 only. Do not provide \n"
"any explanation, additional text, or punctuation.\n"
"\n"
"TRANSCRIPT:\n"
"{transcript_text}\n"
"\n"
"SATISFACTION SCORE (1-5):";

inline const char* kGoldenGoalAware =
"You are an impartial and objective evaluator of user satisfaction in \n"
"conversational AI interactions.\n"
"Your task is to carefully review the following transcript of an interaction \n"
"between a User and an AI Model, along with the User's stated goal.\n"
"Based on this information, provide a numerical rating representing the \n"
"User's likely satisfaction with the interaction.\n"
"\n"
"When making your assessment, pay special attention to whether the AI model \n"
"helped the user accomplish their stated goal.\n"
"\n"
"USER'S GOAL:\n"
"{goal_text}\n"
"\n"
"Use the following 1-5 scale:\n"
"1: Very dissatisfied\n"
"2: Somewhat dissatisfied\n"
"3: Neither satisfied nor dissatisfied\n"
"4: Somewhat satisfied\n"
"5: Very satisfied\n"
"\n"
"Your response MUST be a single integer from 1 to 5 only. Do not provide \n"
"any explanation, additional text, or punctuation.\n"
"\n"
"TRANSCRIPT:\n"
"{transcript_text}\n"
"\n"
"SATISFACTION SCORE (1-5):";
// clang-format on

}  // namespace trace_test
