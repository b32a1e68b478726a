from documenteer.conf.pipelinespkg import *  # noqa: F403, import *

project = "rydberg_ritz"
html_theme_options["logotext"] = project  # noqa: F405, unknown name
html_title = project
html_short_title = project
doxylink = {}
