from processor.report_processor import Histogram, Report, export_excel, export_histogram, report, report_run, report_sweep
