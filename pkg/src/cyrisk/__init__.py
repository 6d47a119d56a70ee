"""Cyber risk scores from filing text, plus the asset-pricing test battery.

The package is organised as a pipeline: ``textprep`` turns raw documents
into token paragraphs, ``embed`` trains paragraph vectors, ``cluster``
groups attack descriptions into super-tactics, ``score`` produces firm
level cyber scores, ``portfolio`` builds score-sorted portfolios, and
``pricing`` / ``events`` run the test battery on the results.  ``ingest``
holds the file-format plumbing and the synthetic data generator, and
``cli`` wires everything into subcommands.
"""

__version__ = "0.1.0"
