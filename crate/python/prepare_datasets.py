"""Convert the public Adult and COMPAS files into CSVs that match
schemas/adult.schema.json and schemas/compas.schema.json.

No data is downloaded. Point the script at local copies:

    python python/prepare_datasets.py adult adult.data [adult.test] -o adult.csv
    python python/prepare_datasets.py compas compas-scores-two-years.csv -o compas.csv
"""

import argparse
import csv
import sys

ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education_num",
    "marital_status", "occupation", "relationship", "race", "sex",
    "capital_gain", "capital_loss", "hours_per_week", "native_country",
    "income",
]

COMPAS_COLUMNS = [
    "sex", "age", "age_cat", "race", "juv_fel_count", "juv_misd_count",
    "juv_other_count", "priors_count", "c_charge_degree", "c_charge_desc",
    "two_year_recid",
]


def adult_rows(paths):
    for path in paths:
        with open(path, newline="") as fh:
            for raw in csv.reader(fh, skipinitialspace=True):
                if len(raw) != len(ADULT_COLUMNS):
                    continue  # blank lines and the test file's banner
                row = [cell.strip() for cell in raw]
                if "?" in row:
                    continue
                row[-1] = row[-1].rstrip(".")
                yield row


def compas_rows(path):
    """Rows kept by ProPublica's screening filter (6172 for the 2-year file)."""
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            days = rec["days_b_screening_arrest"]
            if days == "" or not -30 <= float(days) <= 30:
                continue
            if rec["is_recid"] == "-1" or rec["c_charge_degree"] == "O":
                continue
            if rec["score_text"] == "N/A":
                continue
            yield [rec[c] for c in COMPAS_COLUMNS]


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("dataset", choices=["adult", "compas"])
    parser.add_argument("inputs", nargs="+")
    parser.add_argument("-o", "--out", required=True)
    args = parser.parse_args(argv)

    if args.dataset == "adult":
        header, rows = ADULT_COLUMNS, adult_rows(args.inputs)
    else:
        if len(args.inputs) != 1:
            parser.error("compas takes one input file")
        header, rows = COMPAS_COLUMNS, compas_rows(args.inputs[0])

    n = 0
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
            n += 1
    print(f"wrote {n} rows to {args.out}", file=sys.stderr)


if __name__ == "__main__":
    main()
