"""Run the two-row fixture through every method and print the prompt, summary and scores."""

from dimsum.backends import EchoBackend
from dimsum.evaluation import evaluate_batch
from dimsum.fixtures import sample_spec, sample_table
from dimsum.pipeline import run_pipeline


def main():
    table, spec = sample_table(), sample_spec()
    result = run_pipeline(None, table, spec, backend=EchoBackend())
    print(result.prompt)
    print()
    print(result.summary)
    print()
    print(evaluate_batch(table, [spec], backend=EchoBackend()).to_text())


if __name__ == "__main__":
    main()
