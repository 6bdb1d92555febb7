"""Prompt templates for the secondary-LM calls.

Each template has a stable id used in verdict-cache fingerprints. Marker
strings used for masking candidate solutions are defined here so decoding
and synthesis agree on them byte-for-byte.
"""

START_UNCERTAIN = "*START_UNCERTAIN_REGION*"
END_UNCERTAIN = "*END_UNCERTAIN_REGION*"
START_POSSIBLE_ERROR = "*START_POSSIBLE_ERROR*"
END_POSSIBLE_ERROR = "*END_POSSIBLE_ERROR*"

MARKERS = (START_UNCERTAIN, END_UNCERTAIN, START_POSSIBLE_ERROR, END_POSSIBLE_ERROR)

EQUIVALENCE_TEXT_ID = "equivalence-text-v1"
EQUIVALENCE_MATH_ID = "equivalence-math-v1"
EDIT_ID = "edit-finalize-v1"
VERIFY_ID = "verify-pair-v1"
SYNTHESIZE_ID = "synthesize-final-v1"

EQUIVALENCE_TEXT_TEMPLATE = """\
You are given two pieces of text. Your task is to determine whether they are semantically equivalent based solely on their factual content.

Here are the specific guidelines:
- Texts are equivalent if they convey the same core information or concept, regardless of wording or structure
- If one text has information that is a subset of the other text, then the texts are equivalent
- Focus ONLY on the essential claims, not on:
  * Stylistic differences or tone
  * Level of detail (if the core facts remain the same)
  * Connotative differences between words
  * Implied significance or emphasis
  * Presentation order (if all key information is present in both)
- Minor additions of non-contradictory information should not make texts non-equivalent
- For ambiguous cases, prioritize the central claim or purpose of the text

Examples of equivalent pairs:
- `The meeting starts at 3pm` and `The 3 o'clock meeting will begin on time`
- `Research indicates a 15% increase` and `Studies show a fifteen percent rise`
- `was influential in the field` and `had a significant impact on the community`

Examples of non-equivalent pairs:
- "The project might be completed by Friday" and "The project will be finished by Friday"
- "Most experts agree on the approach" and "All experts support the approach"

Strictly follow these guidelines and return ONLY:
- equivalent
- not equivalent

Text 1: {text_1}
Text 2: {text_2}
"""

EQUIVALENCE_MATH_TEMPLATE = """\
You are given two pieces of text from mathematical solutions. Your task is to determine whether the two solution segments are mathematically equivalent in their content, while allowing for stylistic variations.

Here are some important guidelines:
- Solutions should be considered equivalent if:
  1. They communicate the same mathematical content/approach, even if word choice or phrasing differs
  2. They contain the same key mathematical ideas, even if expressed differently
  3. The same mathematical steps are described, even if using different words
  4. They present the same final answer, regardless of wording style or formatting
- Allow for these variations while still considering solutions equivalent:
  1. Stylistic differences ("we will" vs. "we'll" or "I'll")
  2. Different levels of formality in the explanation
  3. Minor rephrasing that preserves the core mathematical content
  4. Use of synonyms or alternative mathematical terminology for the same concept
- Solutions are NOT equivalent if:
  1. They use fundamentally different mathematical approaches
  2. They work with different formulas or equations
  3. They present different mathematical steps or operations
  4. They reach different conclusions or answers
  5. One contains substantial mathematical content that the other lacks
- When examining final answers, focus on mathematical equivalence rather than stylistic presentation
- For solution steps, maintain the core mathematical approach while allowing for rephrasing

Examples of solutions that SHOULD be considered equivalent:
- "We will systematically evaluate each possible grouping" and "We'll evaluate each grouping"
- "The answer is x = 5" and "Therefore, x equals 5"
- "Using the quadratic formula" and "Applying the quadratic formula"

Strictly follow the guidelines above.

Return your judgment in the following format. Do not include any other text:
- equivalent
- not equivalent

Text 1: {text_1}
Text 2: {text_2}
"""

EDIT_TEMPLATE = """\
You are given a piece of text that is a part of a {task}. This text may contain some minor errors that make it incoherent as well as potentially redundant information. Your task is to fix the errors and make the text coherent.
Then, remove any redundant information.
Text: {text}

If this is not possible because the text is just a fragment of a sentence, return "Abstain".
If the text already claims a lack of knowledge about the topic, return "Abstain".
Only return the cleaned up text. Do not include any other text:
"""

VERIFY_TEMPLATE = """\
You will be given a problem and 2 partial solutions.
Your task is to use comparison as an EFFICIENCY TOOL to quickly identify potential errors.
You will be given guidelines to follow, and you will be penalized if you do not follow them.

Problem: {problem}

Partial Solution 1: {partial_solution_1}
Partial Solution 2: {partial_solution_2}

- CRITICAL GUIDELINES:
  * DO NOT penalize a solution for being incomplete or having missing steps
  * DO NOT make a comparison of which solution is better
  * DO NOT consider steps incorrect just because they differ between solutions
  * DO NOT prematurely evaluate based on final answers or future steps
  * DO NOT expect both solutions to be at the same stage of completion
  * DO NOT consider a step incorrect just because it lacks sufficient detail or justification

- KEY EFFICIENCY PRINCIPLE:
  * Use agreement between solutions as evidence of correctness
  * Use disagreement as a signal to investigate more deeply
  * Only label a step as an error if it contains a specific mathematical mistake
  * Incompleteness is not a mathematical error.

- EFFICIENT VERIFICATION APPROACH:

- 1. QUICK COMPARISON (Use this to focus your attention):
  * Immediately identify where the solutions differ in approach or results
  * Use these differences as "error hotspots" to prioritize your verification
  * When solutions agree, you can generally assume that part is correct
  * When solutions disagree, investigate those specific points deeply

- 2. TARGETED VERIFICATION (Only where needed):
  * Most important: Do not consider any incomplete steps as errors
  * Focus your mathematical verification on the "hotspots" identified above
  * Check mathematical validity only at points of difference or uncertainty
  * Avoid line-by-line checking of steps where solutions agree
  * For each potential error spot, verify if the mathematical reasoning is valid
  * If an intermediate step is later corrected, do not penalize the solution for having the incorrect intermediate step

- After your targeted verification, propose a score tuple (score_1, score_2):
  * Score (1,1) if both partial solutions are valid
  * Score (1,0) if only the first solution is valid
  * Score (0,1) if only the second solution is valid
  * Score (0,0) if both solutions are invalid

- In case you score a solution as 0, you must give an explanation for each check below:
  * If you score a solution as 0, you MUST identify the specific mathematical error.
  * You must also double check the problem statement. Reconsider your score and determine if you have misinterpreted the problem statement.
  * You must also check whether you have penalized a solution for being incomplete or having missing steps.

- Before outputting your final score, you must answer these questions:
  * STOP! Did you give a score of 0 to a solution that was incomplete?
  * STOP! Did you penalize a solution for being incomplete or having missing steps?
  * STOP! Did you make a comparison of which solution is better?
  * STOP! Did you consider steps incorrect just because they differ between solutions?
  * STOP! Did you prematurely evaluate based on final answers?
  * STOP! Did you consider a step incorrect just because it lacks sufficient detail or justification?

Now give your final score:
Final score:
"""

SYNTHESIZE_TEMPLATE = """\
Solve the following math problem with mathematical precision and clarity.

Problem: {problem}

Below are potential solution approaches with sections marked as uncertain (between *START_UNCERTAIN_REGION* and *END_UNCERTAIN_REGION*).
These sections may contain conceptual or computational errors.

There are also sections marked as *START_POSSIBLE_ERROR* and *END_POSSIBLE_ERROR*.
A verification step indicated that these steps are highly likely to contain errors.

Potential Approaches:
{masked_candidate_responses}

- Your task:
  1. Analyze all potential approaches critically, identifying their mathematical strengths and weaknesses
     If the approaches contain different answers, think carefully about why they are different, and use this to identify potential errors.
  2. Using the sections with special markers, identify potential errors.
  3. Develop a rigorous, step-by-step solution based on sound mathematical principles
  4. For uncertain regions:
     * Verify each step using algebraic or numerical validation
     * If correct, incorporate these steps with appropriate justification
     * If incorrect, provide clear corrections with mathematical reasoning for your changes
  5. Follow a comparative approach, using the differences between approaches to identify potential errors.
  6. Do not blindly follow the approaches, but rather use them to identify potential errors.

- Guidelines for your solution:
  * Begin with a strategic overview of your chosen approach
  * Present each mathematical step with clear notation and justification
  * Pay special attention to areas that were previously marked uncertain

Conclude your solution with:
Therefore, the final answer is: $\\boxed{{answer}}$.
Solution:
"""


def render_equivalence(text_1: str, text_2: str, task_kind: str = "text") -> tuple[str, str]:
    """Render the equivalence prompt; returns (template_id, prompt)."""
    if task_kind == "math":
        return EQUIVALENCE_MATH_ID, EQUIVALENCE_MATH_TEMPLATE.format(text_1=text_1, text_2=text_2)
    return EQUIVALENCE_TEXT_ID, EQUIVALENCE_TEXT_TEMPLATE.format(text_1=text_1, text_2=text_2)


def render_edit(text: str, task: str) -> tuple[str, str]:
    return EDIT_ID, EDIT_TEMPLATE.format(task=task, text=text)


def render_verify(problem: str, partial_1: str, partial_2: str) -> tuple[str, str]:
    return VERIFY_ID, VERIFY_TEMPLATE.format(
        problem=problem, partial_solution_1=partial_1, partial_solution_2=partial_2
    )


def render_synthesize(problem: str, masked_candidates: list[str]) -> tuple[str, str]:
    joined = "\n\n".join(masked_candidates)
    return SYNTHESIZE_ID, SYNTHESIZE_TEMPLATE.format(
        problem=problem, masked_candidate_responses=joined
    )


def strip_markers(text: str) -> str:
    for marker in MARKERS:
        text = text.replace(marker, "")
    return " ".join(text.split())
