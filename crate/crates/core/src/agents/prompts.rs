//! Prompt templates used by the agent pool, the refinement rounds, and
//! the consensus judge.
//!
//! Placeholders are literal `{question}`, `{joined_answers}`,
//! `{round_num}`, and `{hints}` tokens substituted at prompt-build time.
//! The answer span markers `<<<` / `>>>`, the `<search>` tags, the
//! `<information>` evidence tags, and the ` ```python ` fence are wire
//! format and must not be altered.

/// Joint prompt for refinement rounds (round 2 onward). Also used by the
/// LLM selector with the final round's candidates.
pub const REFINEMENT_TEMPLATE: &str = "Task: Decide the final answer based on the following answers from other agents.

Question:
{question}

Candidate answers from several methods:
{joined_answers}

Based on the candidates above, analyze the question step by step and try to list all the careful points. In the end of your response, directly output the answer to the question with the format <<<answer content>>>.";

/// Consensus-judge prompt for refinement termination.
pub const JUDGE_TEMPLATE: &str = "Task: Carefully assess whether the answers below (enclosed by <<< >>>) show clear and strong consensus, or if another round of reasoning is needed to improve alignment.

IMPORTANT: If there are any differences in reasoning, phrasing, emphasis, conclusions, or interpretation of key details, you should conservatively decide to continue refinement.

The current round number is {round_num}. Note: Finalizing before round 3 is uncommon and discouraged unless answers are fully aligned in both logic and language.

Question:
{question}

Candidate answers from different methods:
{joined_answers}

Instructions:
1. Identify any differences in wording, structure, or logic.
2. Be especially cautious about subtle variations in conclusion or emphasis.
3. Err on the side of caution: if there's any ambiguity or divergence, recommend another round.

Output your reasoning first, then conclude clearly with <<<YES>>> if the answers are highly consistent and finalization is safe, or <<<NO>>> if further refinement is needed.";

/// Head prompt for the chain-of-thought agent (no tools).
pub const COT_HEAD: &str = "- Analyze the question step by step and try to list all the careful points.
- Then try to acquire the final answer with step by step analysis.
- In the end of your response, directly output the answer to the question.

Do not output the code for execution.";

/// Head prompt for the chain-of-thought code-output agent. The final
/// code block is executed by the harness at scoring time, not by the
/// agent loop.
pub const COT_CODE_HEAD: &str = "You are a helpful AI assistant. Solve tasks using your coding skills.

In the following cases, suggest python code (in a python coding block) for the user to execute.

- Don't include multiple code blocks in one response, only include one in the response.
- Do not ask users to copy and paste the result. Instead, use the 'print' function for the output when relevant.

Think the task step by step if you need to. If a plan is not provided, explain your plan first. You can first output your thinking steps with texts and then the final python code.

Remember in the final code you still need to output each number or choice in the final print!

Start the python block with ```python";

/// Head prompt for the code-interpreter agent.
pub const CODE_HEAD: &str = "The User asks a question, and you solve it. You first generate the reasoning and thinking process and then provide the User with the final answer. During the thinking process, **you can generate python code** for efficient searching, optimization, and computing with the format of starting the python block with ```python. **A code query must involve only a single script that uses 'print' function for the output.**. Once the code script is complete, stop the generation. Then, the code interpreter platform will execute the code and return the execution output and error. Once you feel you are ready for the final answer, directly return the answer with the format <<<answer content>>> at the end of your response. Otherwise, you can continue your reasoning process and possibly generate more code query to solve the problem.";

/// Head prompt for the search-only agent. Search-only reduction of the
/// dual-tool instructions; the inherent-search variant routes queries
/// through the model provider.
pub const SEARCH_HEAD: &str = "The User asks a question, and you solve it. You first generate the reasoning and thinking process and then provide the User with the final answer.

If you lack the related knowledge, you can use the Google Search Tool to search the web and get the information. You can call a search query with the format of <search>your search query</search>, e.g., <search>Who is the current president of US?</search>. The searched results will be returned between <information> and </information>. Once the search query is complete, stop the generation. Then, the search platform will return the searched results.

You can also solve the question without searching, just by your textual reasoning.

Once you feel you are ready for the final answer, directly return the answer with the format <<<answer content>>> at the end of your response. Otherwise, you can continue your reasoning process and possibly generate more search queries to solve the problem.";

/// Head prompt for the dual-tool agent (code interpreter + web search).
pub const DUAL_TOOL_HEAD: &str = "The User asks a question, and you solve it. You first generate the reasoning and thinking process and then provide the User with the final answer.

During the thinking process, you can generate python code for efficient searching, optimization, and computing with the format of starting the python block with ```python. **A code query must involve only a single script that uses 'print' function for the output.**.. Once the code script is complete, stop the generation. Then, the code interpreter platform will execute the code and return the execution output and error.

If you lack the related knowledge, you can use the Google Search Tool to search the web and get the information. You can call a search query with the format of <search>your search query</search>, e.g., <search>Who is the current president of US?</search>. The searched results will be returned between <information> and </information>. Once the search query is complete, stop the generation. Then, the search platform will return the searched results.

If you need to search the web, do not generate code in the same response. Vice versa. You can also solve the question without code and searching, just by your textual reasoning.

Once you feel you are ready for the final answer, directly return the answer with the format <<<answer content>>> at the end of your response. Otherwise, you can continue your reasoning process and possibly generate more code or search queries to solve the problem.";

/// Shared body of the guided (steering) agent prompt, without the
/// trailing task introduction.
const GUIDED_BODY: &str = "You are guiding another TaskLLM to solve a task. You will be presented with a task that can be solved using textual reasoning, coding, and web searching. Sometimes the TaskLLM may need extra help to solve the task, such as generating code or searching the web. Then must follow the rules below for both query and return answer:

During the thinking process, you can generate python code for efficient searching, optimization, and computing with the format of starting the python block with ```python. A code query must involve only a single script that uses 'print' function for the output.. Once the code script is complete, stop the generation. Then, the code interpreter platform will execute the code and return the execution output and error.

If you lack the related knowledge, you can use the Google Search Tool to search the web and get the information. You can call a search query with the format of <search>your search query</search>, e.g., <search>Who is the current president of US?</search>. The searched results will be returned between <information> and </information>. Once the search query is complete, stop the generation. Then, the search platform will return the searched results.

If you need to search the web, do not generate code in the same response. Vice versa. You can also solve the question without code and searching, just by your textual reasoning.

Once you feel you are ready for the final answer, directly return the answer with the format <<<answer content>>> at the end of your response. Otherwise, you can continue your reasoning process and possibly generate more code or search queries to solve the problem.

Your goal is to determine which method will be most effective for solving the task. Then you generate the guidance prompt for the TaskLLM to follow in the next round. The final returned guidance prompt should be included between <<< and >>>, such as <<<You need to generate more complex code to solve...>>>.";

const TASK_INTRO: &str = "Now, here is the task:";

pub fn guided_head() -> String {
    format!("{GUIDED_BODY}\n\n{TASK_INTRO}")
}

/// Guided head with a user-supplied hint slot before the task
/// introduction. The hint text itself is not published; `{hints}` is
/// filled from the agent spec at build time.
pub fn guided_plus_head() -> String {
    format!("{GUIDED_BODY}\n\n{{hints}}\n\n{TASK_INTRO}")
}

/// Code head with a user-supplied hint slot appended.
pub fn code_plus_head() -> String {
    format!("{CODE_HEAD}\n\n{{hints}}")
}
